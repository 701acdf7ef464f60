#include "poolnet/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace poolnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number<int>(key, item));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"preset",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "desk") {
           c.model.backbone_widths = ModelConfig::desk().backbone_widths;
         } else if (v == "paper") {
           c.model.backbone_widths = ModelConfig::paper_scale().backbone_widths;
         } else {
           throw ConfigError(k + ": expected 'desk' or 'paper', got '" + v + "'");
         }
       }},
      {"backbone_widths",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.backbone_widths = parse_ints(k, v);
       }},
      {"pyramid_channels",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.pyramid_channels = parse_ints(k, v);
       }},
      {"edge_widths",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.edge_widths = parse_ints(k, v);
       }},
      {"fam_rates",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.fam_rates = parse_ints(k, v);
       }},
      {"ppm_sizes",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.ppm_sizes = parse_ints(k, v);
       }},
      {"enable_ppm", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.model.enable_ppm = parse_bool(k, v); }},
      {"enable_ggf", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.model.enable_ggf = parse_bool(k, v); }},
      {"enable_fam", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.model.enable_fam = parse_bool(k, v); }},
      {"enable_edge", [](RunConfig& c, const std::string& k,
                         const std::string& v) { c.model.enable_edge = parse_bool(k, v); }},
      {"lr", [](RunConfig& c, const std::string& k,
                const std::string& v) { c.train.lr = parse_number<double>(k, v); }},
      {"weight_decay",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.weight_decay = parse_number<double>(k, v);
       }},
      {"epochs", [](RunConfig& c, const std::string& k,
                    const std::string& v) { c.train.epochs = parse_number<int>(k, v); }},
      {"lr_drop_epoch",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.lr_drop_epoch = parse_number<int>(k, v);
       }},
      {"lr_drop_factor",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.lr_drop_factor = parse_number<double>(k, v);
       }},
      {"batch_size", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.train.batch_size = parse_number<int>(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k,
                  const std::string& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"joint_edge", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.train.joint_edge = parse_bool(k, v); }},
      {"augment", [](RunConfig& c, const std::string& k,
                     const std::string& v) { c.train.augment = parse_bool(k, v); }},
      {"train_manifest",
       [](RunConfig& c, const std::string&, const std::string& v) { c.train_manifest = v; }},
      {"edge_manifest",
       [](RunConfig& c, const std::string&, const std::string& v) { c.edge_manifest = v; }},
      {"eval_manifest",
       [](RunConfig& c, const std::string&, const std::string& v) { c.eval_manifest = v; }},
      {"output_dir",
       [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_config_key(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

void parse_config(std::istream& in, RunConfig& config, const std::string& source) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_config_key(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config_file(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  parse_config(in, config, path.string());
}

std::string format_model_config(const ModelConfig& c) {
  auto ints = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::ostringstream os;
  os << "backbone_widths = " << ints(c.backbone_widths) << "\n";
  if (!c.pyramid_channels.empty()) os << "pyramid_channels = " << ints(c.pyramid_channels) << "\n";
  if (!c.edge_widths.empty()) os << "edge_widths = " << ints(c.edge_widths) << "\n";
  os << "enable_ppm = " << flag(c.enable_ppm) << "\n"
     << "enable_ggf = " << flag(c.enable_ggf) << "\n"
     << "enable_fam = " << flag(c.enable_fam) << "\n"
     << "enable_edge = " << flag(c.enable_edge) << "\n"
     << "fam_rates = " << ints(c.fam_rates) << "\n"
     << "ppm_sizes = " << ints(c.ppm_sizes) << "\n";
  return os.str();
}

}  // namespace poolnet
