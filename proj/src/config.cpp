#include "soflow/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "soflow/errors.hpp"

namespace soflow::harness {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + text + "'");
}

std::string unquote(const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    return text.substr(1, text.size() - 2);
  }
  return text;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

Field real(std::string section, std::string key, double TrainConfig::*member) {
  const std::string name = key;
  return {std::move(section), std::move(key),
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_double(name, v); },
          [member](const TrainConfig& c) { return format_double(c.*member); }};
}

template <class Get>
Field real_at(std::string section, std::string key, Get access) {
  const std::string name = key;
  return {std::move(section), std::move(key),
          [access, name](TrainConfig& c, const std::string& v) { access(c) = parse_double(name, v); },
          [access](const TrainConfig& c) {
            return format_double(access(const_cast<TrainConfig&>(c)));
          }};
}

template <class Int>
Field integer(std::string section, std::string key, Int TrainConfig::*member) {
  const std::string name = key;
  return {std::move(section), std::move(key),
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_int<Int>(name, v); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field boolean(std::string section, std::string key, bool TrainConfig::*member) {
  const std::string name = key;
  return {std::move(section), std::move(key),
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_bool(name, v); },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field text(std::string section, std::string key, std::string TrainConfig::*member) {
  return {std::move(section), std::move(key),
          [member](TrainConfig& c, const std::string& v) { c.*member = unquote(v); },
          [member](const TrainConfig& c) { return "\"" + c.*member + "\""; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("data", "preset", &TrainConfig::preset));
    f.push_back(boolean("data", "conditional", &TrainConfig::conditional));

    f.push_back({"network", "hidden",
                 [](TrainConfig& c, const std::string& v) {
                   c.hidden.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) {
                     c.hidden.push_back(parse_int<std::size_t>("hidden", trim(item)));
                   }
                 },
                 [](const TrainConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.hidden.size(); ++i) {
                     if (i) out += ",";
                     out += std::to_string(c.hidden[i]);
                   }
                   return out;
                 }});
    f.push_back(integer("network", "embed_dim", &TrainConfig::embed_dim));
    f.push_back(integer("network", "label_dim", &TrainConfig::label_dim));
    f.push_back(real("network", "freq_base", &TrainConfig::freq_base));
    f.push_back(real("network", "freq_scale", &TrainConfig::freq_scale));

    f.push_back({"flow", "schedule",
                 [](TrainConfig& c, const std::string& v) { c.schedule = flow::parse_schedule_kind(v); },
                 [](const TrainConfig& c) { return std::string(flow::to_string(c.schedule)); }});
    f.push_back({"flow", "parameterization",
                 [](TrainConfig& c, const std::string& v) {
                   c.parameterization = flow::parse_param_kind(v);
                 },
                 [](const TrainConfig& c) { return std::string(flow::to_string(c.parameterization)); }});

    f.push_back(real("loss", "lambda", &TrainConfig::lambda));
    f.push_back(real("loss", "p", &TrainConfig::p));
    f.push_back(real("loss", "epsilon", &TrainConfig::epsilon));

    f.push_back({"lschedule", "kind",
                 [](TrainConfig& c, const std::string& v) {
                   c.lschedule.kind = flow::parse_lschedule_kind(v);
                 },
                 [](const TrainConfig& c) { return std::string(flow::to_string(c.lschedule.kind)); }});
    f.push_back(real_at("lschedule", "r_init", [](TrainConfig& c) -> double& { return c.lschedule.r_init; }));
    f.push_back(real_at("lschedule", "r_end", [](TrainConfig& c) -> double& { return c.lschedule.r_end; }));

    f.push_back(real("time", "fm_mu", &TrainConfig::fm_mu));
    f.push_back(real("time", "fm_sigma", &TrainConfig::fm_sigma));
    f.push_back(real("time", "t_mu", &TrainConfig::t_mu));
    f.push_back(real("time", "t_sigma", &TrainConfig::t_sigma));
    f.push_back(real("time", "s_mu", &TrainConfig::s_mu));
    f.push_back(real("time", "s_sigma", &TrainConfig::s_sigma));

    f.push_back(real_at("guidance", "w", [](TrainConfig& c) -> double& { return c.guidance.w; }));
    f.push_back(real_at("guidance", "m", [](TrainConfig& c) -> double& { return c.guidance.m; }));
    f.push_back(real_at("guidance", "drop_rate",
                        [](TrainConfig& c) -> double& { return c.guidance.drop_rate; }));
    f.push_back(real_at("guidance", "t_decay",
                        [](TrainConfig& c) -> double& { return c.guidance.t_decay; }));

    f.push_back(real("optim", "lr", &TrainConfig::lr));
    f.push_back(real("optim", "beta1", &TrainConfig::beta1));
    f.push_back(real("optim", "beta2", &TrainConfig::beta2));
    f.push_back(real("optim", "eps", &TrainConfig::adam_eps));
    f.push_back(real("optim", "ema_decay", &TrainConfig::ema_decay));

    f.push_back(integer("run", "batch", &TrainConfig::batch));
    f.push_back(integer("run", "steps", &TrainConfig::steps));
    f.push_back(integer("run", "seed", &TrainConfig::seed));
    f.push_back(integer("run", "log_every", &TrainConfig::log_every));
    f.push_back(integer("run", "eval_every", &TrainConfig::eval_every));
    f.push_back(integer("run", "checkpoint_every", &TrainConfig::checkpoint_every));
    f.push_back(text("run", "checkpoint", &TrainConfig::checkpoint));
    f.push_back(text("run", "metrics", &TrainConfig::metrics));
    f.push_back(boolean("run", "log_wall_clock", &TrainConfig::log_wall_clock));
    return f;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  const data::GmmSpec spec = gmm();
  spec.validate();
  network_shape().validate();
  const obj::LossConfig loss = loss_config();
  loss.validate();
  lschedule.validate();
  if (conditional) guidance.validate();
  for (double sigma : {fm_sigma, t_sigma, s_sigma}) {
    if (!(sigma >= 0.0)) throw ConfigError("config: time sampler sigmas must be non-negative");
  }
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("config: betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("config: optimizer eps must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("config: ema_decay must lie in (0, 1)");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (lambda > 0.0 && lambda < 1.0 && batch < 2) {
    throw ConfigError("config: batch must be >= 2 when 0 < lambda < 1");
  }
  if (steps < 0) throw ConfigError("config: steps must be >= 0");
  if (log_every < 0 || eval_every < 0 || checkpoint_every < 0) {
    throw ConfigError("config: periods must be non-negative");
  }
}

data::GmmSpec TrainConfig::gmm() const { return data::preset(preset); }

nn::NetworkShape TrainConfig::network_shape() const {
  const data::GmmSpec spec = gmm();
  nn::NetworkShape shape;
  shape.data_dim = spec.dim();
  shape.num_classes = static_cast<std::size_t>(spec.num_classes());
  shape.embed_dim = embed_dim;
  shape.label_dim = label_dim;
  shape.hidden = hidden;
  shape.freq_base = freq_base;
  shape.freq_scale = freq_scale;
  return shape;
}

obj::LossConfig TrainConfig::loss_config() const {
  obj::LossConfig cfg;
  cfg.lambda = lambda;
  cfg.p = p;
  cfg.epsilon = epsilon;
  cfg.schedule = flow::NoisingSchedule(schedule);
  cfg.param = flow::SolutionParameterization(parameterization);
  return cfg;
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::map<std::string, const Field*> lookup;
  std::set<std::string> sections;
  for (const Field& f : fields()) {
    lookup[f.section + "." + f.key] = &f;
    sections.insert(f.section);
  }
  std::set<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const std::string full = section + "." + key;
    const auto it = lookup.find(full);
    if (it == lookup.end()) throw ConfigError(where + "unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ConfigError(where + "duplicate key '" + full + "'");
    it->second->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a(to_text(cfg)); }

}  // namespace soflow::harness
