#include "yoto/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "yoto/errors.hpp"

YOTO_BEGIN_NAMESPACE

namespace {

constexpr char kMagic[4] = {'Y', 'O', 'T', 'O'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <class T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos < n || pos > bytes_.size()) {
      throw FormatError(std::string("weights: truncated while reading ") + what, pos);
    }
  }
  template <class T>
  T uint(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos + i]) << (8 * i));
    pos += sizeof(T);
    return v;
  }

  std::size_t pos = 0;

 private:
  const std::vector<std::uint8_t>& bytes_;
};

}  // namespace

std::size_t WeightStore::value_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.data.size();
  return n;
}

std::vector<std::uint8_t> encode_weights(const WeightStore& store) {
  std::set<std::string> names;
  std::size_t header = 4 + 4 + 4;
  for (const auto& e : store.entries) {
    if (!names.insert(e.name).second) throw ContractError("weights: duplicate entry name '" + e.name + "'");
    if (e.name.size() > 0xFFFF) throw ContractError("weights: entry name too long");
    if (e.shape.size() > 0xFF) throw ContractError("weights: rank too large");
    std::size_t n = 1;
    for (auto d : e.shape) n *= d;
    if (n != e.data.size()) throw ContractError("weights: entry '" + e.name + "' shape does not match its data");
    header += 2 + e.name.size() + 1 + 4 * e.shape.size() + 8;
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint32_t>(kWeightsVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(store.entries.size()));
  std::uint64_t offset = header;
  for (const auto& e : store.entries) {
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.uint<std::uint32_t>(d);
    w.uint<std::uint64_t>(offset);
    offset += 4 * e.data.size();
  }
  for (const auto& e : store.entries) {
    for (float v : e.data) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return std::move(w.out);
}

WeightStore decode_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("weights: bad magic, expected YOTO", 0);
  r.pos = 4;
  const std::size_t version_at = r.pos;
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kWeightsVersion) {
    throw FormatError("weights: unsupported version " + std::to_string(version), version_at);
  }
  const auto count = r.uint<std::uint32_t>("entry count");
  WeightStore store;
  std::vector<std::uint64_t> offsets;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.pos;
    WeightStore::Entry e;
    const auto len = r.uint<std::uint16_t>("name length");
    r.need(len, "name");
    e.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), len);
    r.pos += len;
    if (!names.insert(e.name).second) throw FormatError("weights: duplicate entry '" + e.name + "'", entry_at);
    const auto rank = r.uint<std::uint8_t>("rank");
    std::uint64_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.pos;
      e.shape.push_back(r.uint<std::uint32_t>("dimension"));
      if (e.shape.back() == 0) throw FormatError("weights: zero dimension in '" + e.name + "'", dim_at);
      n *= e.shape.back();
      if (n > bytes.size()) throw FormatError("weights: entry '" + e.name + "' larger than the file", dim_at);
    }
    e.data.resize(static_cast<std::size_t>(n));
    offsets.push_back(r.uint<std::uint64_t>("data offset"));
    store.entries.push_back(std::move(e));
  }
  std::uint64_t expected = r.pos;
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    auto& e = store.entries[i];
    if (offsets[i] != expected) {
      throw FormatError("weights: entry '" + e.name + "' has data offset " + std::to_string(offsets[i]) + ", expected " +
                        std::to_string(expected), expected);
    }
    r.pos = static_cast<std::size_t>(offsets[i]);
    for (auto& v : e.data) v = std::bit_cast<float>(r.uint<std::uint32_t>("tensor data"));
    expected = r.pos;
  }
  if (r.pos != bytes.size()) throw FormatError("weights: trailing bytes after tensor data", r.pos);
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_weights(store);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open weights: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

WeightStore to_weight_store(const Model& model) {
  WeightStore store;
  for (const auto& p : model.parameters()) {
    WeightStore::Entry e;
    e.name = p.name;
    for (auto d : p.tensor.shape()) e.shape.push_back(static_cast<std::uint32_t>(d));
    for (real v : p.tensor.data()) e.data.push_back(static_cast<float>(v));
    store.entries.push_back(std::move(e));
  }
  return store;
}

void apply_weight_store(Model& model, const WeightStore& store) {
  auto params = model.parameters();
  if (params.size() != store.entries.size()) {
    throw ContractError("weights: file has " + std::to_string(store.entries.size()) + " entries, model expects " +
                        std::to_string(params.size()));
  }
  // Validate everything before touching the model.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = store.entries[i];
    Shape shape(e.shape.begin(), e.shape.end());
    if (e.name != params[i].name || shape != params[i].tensor.shape()) {
      throw ContractError("weights: entry " + std::to_string(i) + " is '" + e.name + "' " + shape_str(shape) +
                          ", model expects '" + params[i].name + "' " + shape_str(params[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    const auto& src = store.entries[i].data;
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<real>(src[j]);
  }
}

void save_model(const Model& model, const std::filesystem::path& path) { save_weights(to_weight_store(model), path); }

Model load_model(const std::filesystem::path& path, const ModelConfig& config) {
  const WeightStore store = load_weights(path);
  Model model = Model::init(config, 0);
  apply_weight_store(model, store);
  return model;
}

YOTO_END_NAMESPACE
