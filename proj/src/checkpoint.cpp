#include "xgait/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "xgait/errors.hpp"

namespace xgait {

namespace {

constexpr char kMagic[8] = {'X', 'G', 'C', 'K', 'P', 'T', '0', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, (uint32_t)s.size());
  os.write(s.data(), (std::streamsize)s.size());
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

std::string get_string(std::istream& is) {
  uint32_t n = get<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOFailure("cannot write checkpoint: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, 1);  // format version
  put<uint64_t>(os, ckpt.iteration);
  put_string(os, ckpt.fingerprint);

  put<uint32_t>(os, (uint32_t)ckpt.tensors.size());
  for (const auto& [name, e] : ckpt.tensors) {
    put_string(os, name);
    put<uint8_t>(os, e.kind);
    put<uint32_t>(os, (uint32_t)e.shape.size());
    for (int d : e.shape) put<uint32_t>(os, (uint32_t)d);
    put<uint64_t>(os, (uint64_t)e.data.size());
    os.write(reinterpret_cast<const char*>(e.data.data()),
             (std::streamsize)(e.data.size() * sizeof(float)));
  }
  put<uint32_t>(os, (uint32_t)ckpt.rng_states.size());
  for (const auto& [name, state] : ckpt.rng_states) {
    put_string(os, name);
    put_string(os, state);
  }
  if (!os) throw IOFailure("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOFailure("checkpoint not found: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path);
  uint32_t version = get<uint32_t>(is);
  if (version != 1) throw DataError("unsupported checkpoint version in " + path);

  Checkpoint ckpt;
  ckpt.iteration = get<uint64_t>(is);
  ckpt.fingerprint = get_string(is);
  uint32_t n = get<uint32_t>(is);
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = get_string(is);
    Checkpoint::Entry e;
    e.kind = get<uint8_t>(is);
    uint32_t ndim = get<uint32_t>(is);
    for (uint32_t d = 0; d < ndim; ++d) e.shape.push_back((int)get<uint32_t>(is));
    uint64_t count = get<uint64_t>(is);
    e.data.resize(count);
    is.read(reinterpret_cast<char*>(e.data.data()), (std::streamsize)(count * sizeof(float)));
    ckpt.tensors.emplace(std::move(name), std::move(e));
  }
  uint32_t nr = get<uint32_t>(is);
  for (uint32_t i = 0; i < nr; ++i) {
    std::string name = get_string(is);
    ckpt.rng_states[name] = get_string(is);
  }
  if (!is) throw DataError("truncated checkpoint: " + path);
  return ckpt;
}

void pack_model(const nn::ParamRefs<float>& refs, Checkpoint& ckpt) {
  for (const auto* p : refs.params) {
    Checkpoint::Entry e;
    e.kind = 0;
    e.shape = p->w.shape;
    e.data = p->w.v;
    ckpt.tensors[p->name] = std::move(e);
  }
  for (const auto* b : refs.buffers) {
    Checkpoint::Entry e;
    e.kind = 1;
    e.shape = b->w.shape;
    e.data = b->w.v;
    ckpt.tensors[b->name] = std::move(e);
  }
}

void unpack_model(const Checkpoint& ckpt, nn::ParamRefs<float>& refs) {
  auto fetch = [&](const std::string& name, size_t numel) -> const Checkpoint::Entry& {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw DataError("checkpoint is missing tensor " + name);
    if (it->second.data.size() != numel)
      throw DataError("checkpoint tensor " + name + " has wrong size");
    return it->second;
  };
  for (auto* p : refs.params) p->w.v = fetch(p->name, p->w.numel()).data;
  for (auto* b : refs.buffers) b->w.v = fetch(b->name, b->w.numel()).data;
}

}  // namespace xgait
