#include "coride/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace coride::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'O', 'R', 'I', 'D', 'E', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.value.size())));
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(get<std::uint32_t>(in));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.value.size())));
    if (!in) throw std::runtime_error("checkpoint truncated");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<NamedTensor> collect_tensors(const std::vector<std::pair<std::string, const ParamStore*>>& stores) {
  std::vector<NamedTensor> tensors;
  for (const auto& [prefix, store] : stores) {
    for (std::size_t i = 0; i < store->size(); ++i) {
      tensors.push_back({prefix + "/" + store->name(i), store->value(i)});
    }
  }
  return tensors;
}

void restore_store(ParamStore& store, const std::string& prefix, const std::vector<NamedTensor>& tensors) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string name = prefix + "/" + store.name(i);
    bool found = false;
    for (const auto& t : tensors) {
      if (t.name != name) continue;
      if (t.value.rows() != store.value(i).rows() || t.value.cols() != store.value(i).cols()) {
        throw std::runtime_error("checkpoint shape mismatch for " + name);
      }
      store.value(i) = t.value;
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("checkpoint is missing " + name);
  }
}

void save_checkpoint_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace coride::nn
