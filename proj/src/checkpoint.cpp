#include "soflow/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "soflow/config.hpp"
#include "soflow/errors.hpp"

namespace soflow::harness {
namespace {

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

struct Entry {
  std::string name;
  const Tensor* tensor;
};

std::vector<Entry> tensor_table(const Checkpoint& c) {
  std::vector<Entry> out;
  for (std::size_t i = 0; i < c.live.tensors().size(); ++i) {
    out.push_back({"live." + std::to_string(i), &c.live.tensors()[i]});
  }
  for (std::size_t i = 0; i < c.ema.tensors().size(); ++i) {
    out.push_back({"ema." + std::to_string(i), &c.ema.tensors()[i]});
  }
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) out.push_back({"adam_m." + std::to_string(i), &c.adam_m[i]});
  for (std::size_t i = 0; i < c.adam_v.size(); ++i) out.push_back({"adam_v." + std::to_string(i), &c.adam_v[i]});
  return out;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[noreturn]] void bad(const std::string& what) { throw FormatError("checkpoint: " + what); }

std::string next_line(std::string_view bytes, std::size_t& pos) {
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string_view::npos) bad("manifest is truncated");
  std::string line(bytes.substr(pos, nl - pos));
  pos = nl + 1;
  return line;
}

std::pair<std::string, std::string> split_key(const std::string& line) {
  const auto sp = line.find(' ');
  if (sp == std::string::npos) return {line, ""};
  return {line.substr(0, sp), line.substr(sp + 1)};
}

std::int64_t to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) bad("bad integer for " + what);
    return v;
  } catch (const std::logic_error&) {
    bad("bad integer for " + what);
  }
}

std::string expect(std::string_view bytes, std::size_t& pos, const std::string& key) {
  auto [k, v] = split_key(next_line(bytes, pos));
  if (k != key) bad("expected '" + key + "', found '" + k + "'");
  return v;
}

}  // namespace

std::string serialize(const Checkpoint& c) {
  std::string out = "soflow-checkpoint " + std::to_string(c.version) + "\n";
  out += "config_hash " + hex(c.config_hash) + "\n";
  std::size_t lines = 0;
  for (char ch : c.config_text) lines += ch == '\n';
  if (!c.config_text.empty() && c.config_text.back() != '\n') bad("config text must end in a newline");
  out += "config_lines " + std::to_string(lines) + "\n" + c.config_text;
  out += "step " + std::to_string(c.step) + "\n";
  out += "streams " + std::to_string(c.streams.size()) + "\n";
  for (const auto& [name, state] : c.streams) out += "stream " + name + " " + state + "\n";
  out += "adam_steps " + std::to_string(c.adam_steps) + "\n";
  const auto table = tensor_table(c);
  out += "tensors " + std::to_string(table.size()) + "\n";
  for (const Entry& e : table) {
    out += "tensor " + e.name + " " + std::to_string(e.tensor->rows()) + " " +
           std::to_string(e.tensor->cols()) + "\n";
  }
  out += "end\n";
  for (const Entry& e : table) {
    for (double v : e.tensor->values()) put_f64(out, v);
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  Checkpoint c;
  std::size_t pos = 0;
  {
    const std::string magic = next_line(bytes, pos);
    auto [k, v] = split_key(magic);
    if (k != "soflow-checkpoint") bad("not a checkpoint file");
    c.version = static_cast<int>(to_int(v, "version"));
    if (c.version != kCheckpointVersion) bad("unsupported format version " + v);
  }
  c.config_hash = std::stoull(expect(bytes, pos, "config_hash"), nullptr, 16);
  const std::int64_t lines = to_int(expect(bytes, pos, "config_lines"), "config_lines");
  for (std::int64_t i = 0; i < lines; ++i) c.config_text += next_line(bytes, pos) + "\n";
  if (fnv1a(c.config_text) != c.config_hash) bad("config hash mismatch (config echo was altered)");
  const TrainConfig cfg = parse_config(c.config_text);
  if (to_text(cfg) != c.config_text) bad("config echo is not in canonical form");

  c.step = to_int(expect(bytes, pos, "step"), "step");
  const std::int64_t nstreams = to_int(expect(bytes, pos, "streams"), "streams");
  for (std::int64_t i = 0; i < nstreams; ++i) {
    auto [name, state] = split_key(expect(bytes, pos, "stream"));
    c.streams[name] = state;
  }
  c.adam_steps = to_int(expect(bytes, pos, "adam_steps"), "adam_steps");

  const nn::NetworkShape shape = cfg.network_shape();
  c.live = nn::ModelParams(shape);
  c.ema = nn::ModelParams(shape);
  const std::size_t n = c.live.tensors().size();
  for (const Tensor& t : c.live.tensors()) {
    c.adam_m.emplace_back(t.shape(), 0.0);
    c.adam_v.emplace_back(t.shape(), 0.0);
  }
  std::vector<Tensor*> slots;
  for (auto* group : {&c.live.tensors(), &c.ema.tensors(), &c.adam_m, &c.adam_v}) {
    for (Tensor& t : *group) slots.push_back(&t);
  }
  const std::int64_t ntensors = to_int(expect(bytes, pos, "tensors"), "tensors");
  if (ntensors != static_cast<std::int64_t>(4 * n)) bad("tensor count does not match the network");
  const auto table = tensor_table(c);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    std::istringstream row(expect(bytes, pos, "tensor"));
    std::string name;
    std::size_t rows = 0, cols = 0;
    row >> name >> rows >> cols;
    if (name != table[i].name || !(Shape{rows, cols} == slots[i]->shape())) {
      bad("tensor entry " + std::to_string(i) + " does not match the network shape");
    }
  }
  if (next_line(bytes, pos) != "end") bad("missing end of manifest");

  std::size_t need = 0;
  for (Tensor* t : slots) need += t->size() * 8;
  if (bytes.size() - pos != need) {
    bad("payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
        std::to_string(need));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  for (Tensor* t : slots) {
    for (std::size_t j = 0; j < t->size(); ++j, p += 8) (*t)[j] = get_f64(p);
  }
  return c;
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("io", "short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("io", "cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace soflow::harness
