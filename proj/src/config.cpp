#include "ebseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ebseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects on/off, got '" + v + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<std::uint64_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("config: '" + key + "' is empty");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void NetConfig::validate() const {
  if (stages < 1) throw ConfigError("config: stages must be >= 1");
  if (channels < 2 || c_low < 1 || c_high < 1) throw ConfigError("config: channel widths must be positive");
  if (use_pgm && points < 1) throw ConfigError("config: points must be >= 1 when pgm is on");
  if (use_pgm && !use_rdm) throw ConfigError("config: pgm needs the rdm edge map (rdm = on)");
  if (thickness < 1) throw ConfigError("config: thickness must be >= 1");
  if (!(lambdas.lambda1 > 0 && lambdas.lambda2 > 0 && lambdas.lambda3 > 0))
    throw ConfigError("config: loss weights must be > 0");
}

void TrainConfig::validate() const {
  net.validate();
  if (iters < 1) throw ConfigError("config: iters must be >= 1");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (!(base_lr > 0)) throw ConfigError("config: base_lr must be > 0");
  if (!(power > 0)) throw ConfigError("config: power must be > 0");
  if (momentum < 0 || weight_decay < 0) throw ConfigError("config: momentum and weight_decay must be >= 0");
  if (size < 32 || size % 8 != 0) throw ConfigError("config: size must be a multiple of 8 and >= 32");
  if (train_count < 1) throw ConfigError("config: train_count must be >= 1");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  NetConfig& n = c.net;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"stages", [&](auto& k, auto& v) { n.stages = parse_int<int>(k, v); }},
      {"channels", [&](auto& k, auto& v) { n.channels = parse_int<std::size_t>(k, v); }},
      {"c_low", [&](auto& k, auto& v) { n.c_low = parse_int<std::size_t>(k, v); }},
      {"c_high", [&](auto& k, auto& v) { n.c_high = parse_int<std::size_t>(k, v); }},
      {"points", [&](auto& k, auto& v) { n.points = parse_int<std::size_t>(k, v); }},
      {"thickness", [&](auto& k, auto& v) { n.thickness = parse_int<int>(k, v); }},
      {"lambda1", [&](auto& k, auto& v) { n.lambdas.lambda1 = parse_double(k, v); }},
      {"lambda2", [&](auto& k, auto& v) { n.lambdas.lambda2 = parse_double(k, v); }},
      {"lambda3", [&](auto& k, auto& v) { n.lambdas.lambda3 = parse_double(k, v); }},
      {"laplacian_variant", [&](auto& k, auto& v) { n.laplacian_variant = parse_bool(k, v); }},
      {"rdm", [&](auto& k, auto& v) { n.use_rdm = parse_bool(k, v); }},
      {"pgm", [&](auto& k, auto& v) { n.use_pgm = parse_bool(k, v); }},
      {"edge_conv_relu", [&](auto& k, auto& v) { n.edge_conv_relu = parse_bool(k, v); }},
      {"supervision",
       [&](auto& k, auto& v) {
         if (v == "stage") n.supervision = Supervision::stage;
         else if (v == "full") n.supervision = Supervision::full;
         else throw ConfigError("config: '" + k + "' must be stage or full");
       }},
      {"iters", [&](auto& k, auto& v) { c.iters = parse_int<int>(k, v); }},
      {"batch", [&](auto& k, auto& v) { c.batch = parse_int<std::size_t>(k, v); }},
      {"base_lr", [&](auto& k, auto& v) { c.base_lr = parse_double(k, v); }},
      {"power", [&](auto& k, auto& v) { c.power = parse_double(k, v); }},
      {"momentum", [&](auto& k, auto& v) { c.momentum = parse_double(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = parse_double(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_int<std::uint64_t>(k, v); }},
      {"data_seed", [&](auto& k, auto& v) { c.data_seed = parse_int<std::uint64_t>(k, v); }},
      {"data_dir", [&](auto&, auto& v) { c.data_dir = v; }},
      {"train_count", [&](auto& k, auto& v) { c.train_count = parse_int<std::size_t>(k, v); }},
      {"val_count", [&](auto& k, auto& v) { c.val_count = parse_int<std::size_t>(k, v); }},
      {"size", [&](auto& k, auto& v) { c.size = parse_int<std::size_t>(k, v); }},
      {"flip", [&](auto& k, auto& v) { c.flip = parse_bool(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = parse_int<int>(k, v); }},
      {"checkpoint_every_epoch", [&](auto& k, auto& v) { c.checkpoint_every_epoch = parse_bool(k, v); }},
      {"ablation_seeds", [&](auto& k, auto& v) { c.ablation_seeds = parse_seed_list(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return train_config_from(parse_key_values(in));
}

std::string to_text(const TrainConfig& c) {
  const NetConfig& n = c.net;
  auto onoff = [](bool b) { return b ? "on" : "off"; };
  std::ostringstream os;
  os << "stages = " << n.stages << "\n"
     << "channels = " << n.channels << "\n"
     << "c_low = " << n.c_low << "\n"
     << "c_high = " << n.c_high << "\n"
     << "points = " << n.points << "\n"
     << "thickness = " << n.thickness << "\n"
     << "lambda1 = " << fmt(n.lambdas.lambda1) << "\n"
     << "lambda2 = " << fmt(n.lambdas.lambda2) << "\n"
     << "lambda3 = " << fmt(n.lambdas.lambda3) << "\n"
     << "laplacian_variant = " << onoff(n.laplacian_variant) << "\n"
     << "rdm = " << onoff(n.use_rdm) << "\n"
     << "pgm = " << onoff(n.use_pgm) << "\n"
     << "edge_conv_relu = " << onoff(n.edge_conv_relu) << "\n"
     << "supervision = " << (n.supervision == Supervision::stage ? "stage" : "full") << "\n"
     << "iters = " << c.iters << "\n"
     << "batch = " << c.batch << "\n"
     << "base_lr = " << fmt(c.base_lr) << "\n"
     << "power = " << fmt(c.power) << "\n"
     << "momentum = " << fmt(c.momentum) << "\n"
     << "weight_decay = " << fmt(c.weight_decay) << "\n"
     << "seed = " << c.seed << "\n"
     << "data_seed = " << c.data_seed << "\n";
  if (!c.data_dir.empty()) os << "data_dir = " << c.data_dir << "\n";
  os << "train_count = " << c.train_count << "\n"
     << "val_count = " << c.val_count << "\n"
     << "size = " << c.size << "\n"
     << "flip = " << onoff(c.flip) << "\n"
     << "threads = " << c.threads << "\n"
     << "checkpoint_every_epoch = " << onoff(c.checkpoint_every_epoch) << "\n"
     << "ablation_seeds = ";
  for (std::size_t i = 0; i < c.ablation_seeds.size(); ++i) os << (i ? "," : "") << c.ablation_seeds[i];
  os << "\n";
  return os.str();
}

}  // namespace ebseg
