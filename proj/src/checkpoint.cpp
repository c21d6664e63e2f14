#include "causalrec/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"

namespace causalrec {

namespace {
constexpr const char* kMagic = "CRCKPT1";
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint has no tensor named " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& entry : tensors)
    if (entry.first == name) return true;
  return false;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, 7);
  binio::put_string(out, ckpt.config);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    binio::put_string(out, name);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) binio::put<std::uint64_t>(out, d);
    binio::put<std::uint64_t>(out, offset);
    offset += t.size();
  }
  binio::put<std::uint64_t>(out, offset);
  for (const auto& entry : ckpt.tensors)
    for (Real v : entry.second.data()) binio::put<double>(out, v);
  if (!out) throw FormatError("write_checkpoint: stream error");
}

Checkpoint read_checkpoint(std::istream& in) {
  binio::expect_magic(in, kMagic);
  Checkpoint ckpt;
  ckpt.config = binio::get_string(in, "config");
  const auto count = binio::get<std::uint32_t>(in, "tensor count");
  std::vector<std::uint64_t> offsets;
  std::vector<Shape> shapes;
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    names.push_back(binio::get_string(in, "tensor name"));
    const auto rank = binio::get<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: implausible rank for " + names.back());
    Shape shape(rank);
    for (auto& d : shape) {
      d = binio::get<std::uint64_t>(in, "extent");
      if (d == 0 || d > (1u << 30)) throw FormatError("checkpoint: implausible extent for " + names.back());
    }
    shapes.push_back(std::move(shape));
    offsets.push_back(binio::get<std::uint64_t>(in, "offset"));
  }
  const auto total = binio::get<std::uint64_t>(in, "payload size");
  std::uint64_t expected = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (offsets[i] != expected) throw FormatError("checkpoint: manifest offsets are not contiguous");
    expected += shape_size(shapes[i]);
  }
  if (expected != total) throw FormatError("checkpoint: payload size disagrees with manifest");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<Real> data(shape_size(shapes[i]));
    for (Real& v : data) v = binio::get<double>(in, "payload");
    ckpt.tensors.emplace_back(names[i], Tensor(shapes[i], std::move(data)));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace causalrec
