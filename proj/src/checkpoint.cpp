#include "driftfollow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace dfw {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_doubles(std::ostream& out, const double* v, std::size_t n) {
  out.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void get_doubles(std::istream& in, double* v, std::size_t n) {
  in.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");

  out.write("DFW1", 4);
  put_u32(out, static_cast<std::uint32_t>(checkpoint.params.hidden_size));
  put_u32(out, static_cast<std::uint32_t>(checkpoint.horizon));
  put_u64(out, checkpoint.params.values.size());
  put_doubles(out, checkpoint.params.values.data(), checkpoint.params.values.size());

  out.write("NRM1", 4);
  put_doubles(out, checkpoint.norm.mean.data(), kFeatureCount);
  put_doubles(out, checkpoint.norm.stddev.data(), kFeatureCount);

  out.write("META", 4);
  out.put(static_cast<char>(checkpoint.stage));
  out.put(static_cast<char>(static_cast<int>(checkpoint.method)));

  if (checkpoint.importance) {
    const ImportanceVector& imp = *checkpoint.importance;
    out.write("IMP1", 4);
    out.put(imp.kind == ImportanceKind::fisher ? 'F' : 'M');
    put_u32(out, static_cast<std::uint32_t>(imp.tasks_seen));
    put_u64(out, imp.weights.size());
    put_doubles(out, imp.weights.data(), imp.weights.size());
    put_doubles(out, imp.anchor.values.data(), imp.anchor.values.size());
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DFW1", 4) != 0)
    throw std::runtime_error(path + ": not a DFW1 checkpoint");

  Checkpoint cp;
  cp.params.hidden_size = static_cast<int>(get_u32(in));
  cp.horizon = static_cast<int>(get_u32(in));
  const std::uint64_t count = get_u64(in);
  if (count != ParamVector::size_for(cp.params.hidden_size))
    throw std::runtime_error(path + ": parameter count does not match layout");
  cp.params.values.resize(count);
  get_doubles(in, cp.params.values.data(), count);

  char tag[4];
  while (in.read(tag, 4)) {
    if (std::memcmp(tag, "NRM1", 4) == 0) {
      get_doubles(in, cp.norm.mean.data(), kFeatureCount);
      get_doubles(in, cp.norm.stddev.data(), kFeatureCount);
    } else if (std::memcmp(tag, "META", 4) == 0) {
      cp.stage = in.get();
      cp.method = static_cast<Method>(in.get());
    } else if (std::memcmp(tag, "IMP1", 4) == 0) {
      ImportanceVector imp;
      const int kind = in.get();
      imp.kind = kind == 'F' ? ImportanceKind::fisher : ImportanceKind::mas;
      imp.tasks_seen = static_cast<int>(get_u32(in));
      const std::uint64_t n = get_u64(in);
      if (n != count) throw std::runtime_error(path + ": importance length mismatch");
      imp.weights.resize(n);
      get_doubles(in, imp.weights.data(), n);
      imp.anchor.hidden_size = cp.params.hidden_size;
      imp.anchor.values.resize(n);
      get_doubles(in, imp.anchor.values.data(), n);
      cp.importance = std::move(imp);
    } else {
      throw std::runtime_error(path + ": unknown section tag");
    }
  }
  if (!in.eof() && in.fail()) throw std::runtime_error(path + ": truncated file");
  return cp;
}

}  // namespace dfw
