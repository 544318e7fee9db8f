#include "structfusion/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace structfusion {

const std::string* Checkpoint::find_meta(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

std::string Checkpoint::meta_or(std::string_view key, std::string fallback) const {
  const std::string* v = find_meta(key);
  return v ? *v : fallback;
}

Checkpoint capture(std::span<Parameter* const> params,
                   std::vector<std::pair<std::string, std::string>> meta) {
  Checkpoint c;
  c.meta = std::move(meta);
  for (const Parameter* p : params) c.tensors.emplace_back(p->name, p->value);
  return c;
}

void restore(const Checkpoint& ckpt, std::span<Parameter* const> params) {
  std::map<std::string_view, const Matrix*> by_name;
  for (const auto& [name, m] : ckpt.tensors) by_name[name] = &m;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor '" + p->name + "'");
    const Matrix& m = *it->second;
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw CheckpointError("tensor '" + p->name + "' has shape [" + std::to_string(m.rows()) + "," +
                            std::to_string(m.cols()) + "], expected [" +
                            std::to_string(p->value.rows()) + "," + std::to_string(p->value.cols()) +
                            "]");
    p->value = m;
    p->zero_grad();
  }
}

std::string serialize(const Checkpoint& ckpt) {
  std::string out = "structfusion-checkpoint 1\n";
  for (const auto& [k, v] : ckpt.meta) out += "meta " + k + " " + v + "\n";
  char buf[64];
  for (const auto& [name, m] : ckpt.tensors) {
    out += "tensor " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, c ? " %a" : "%a", m(r, c));
        out += buf;
      }
      out += "\n";
    }
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> CheckpointError {
    return CheckpointError("checkpoint line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(in, line) || (++lineno, line != "structfusion-checkpoint 1"))
    throw CheckpointError("checkpoint: missing 'structfusion-checkpoint 1' header");
  Checkpoint ckpt;
  bool ended = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      const auto rest = line.substr(5);
      const auto sp = rest.find(' ');
      if (sp == std::string::npos) throw fail("malformed meta line");
      ckpt.meta.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
      continue;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream hdr(line.substr(7));
      std::string name;
      long rows = 0, cols = 0;
      if (!(hdr >> name >> rows >> cols) || rows <= 0 || cols <= 0) throw fail("malformed tensor header");
      Matrix m(rows, cols);
      for (long r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw fail("truncated tensor '" + name + "'");
        ++lineno;
        const char* p = line.c_str();
        for (long c = 0; c < cols; ++c) {
          char* end = nullptr;
          const double v = std::strtod(p, &end);
          if (end == p) throw fail("expected " + std::to_string(cols) + " values in tensor '" + name + "'");
          m(r, c) = v;
          p = end;
        }
      }
      ckpt.tensors.emplace_back(std::move(name), std::move(m));
      continue;
    }
    throw fail("unexpected line '" + line + "'");
  }
  if (!ended) throw fail("missing 'end'");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out << serialize(ckpt);
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

std::string parameter_bytes(std::span<Parameter* const> params) { return serialize(capture(params)); }

}  // namespace structfusion
