#include "lsdhm/model_io.hpp"

#include "lsdhm/binary_io.hpp"
#include "lsdhm/error.hpp"

namespace lsdhm {

namespace {

std::uint32_t u32_of(std::size_t v) {
  if (v > 0xFFFFFFFFull) throw DataError("value does not fit a u32 field");
  return static_cast<std::uint32_t>(v);
}

void expect_end(const ByteReader& r, const char* what) {
  if (!r.at_end()) throw DataError(std::string(what) + " payload has trailing bytes");
}

}  // namespace

std::vector<std::uint8_t> encode_pca(const PcaModel& m) {
  ByteWriter w;
  w.u32(u32_of(m.input_dim));
  w.u32(u32_of(m.output_dim));
  w.u32(m.whitened ? 1 : 0);
  w.f64s(m.mean);
  w.f64s(m.basis);
  w.f64s(m.explained_variance);
  return w.take();
}

PcaModel decode_pca(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  PcaModel m;
  m.input_dim = r.u32();
  m.output_dim = r.u32();
  m.whitened = r.u32() != 0;
  if (m.input_dim == 0 || m.output_dim == 0 || m.output_dim > m.input_dim)
    throw DataError("pca record has invalid dimensions");
  m.mean = r.f64s(m.input_dim);
  m.basis = r.f64s(m.output_dim * m.input_dim);
  m.explained_variance = r.f64s(m.output_dim);
  expect_end(r, "pca");
  return m;
}

std::vector<std::uint8_t> encode_gmm(const GmmModel& m) {
  ByteWriter w;
  w.u32(u32_of(m.num_components));
  w.u32(u32_of(m.dim));
  w.u64(m.seed);
  w.f64(m.weight_floor);
  w.f64(m.variance_floor);
  w.f64s(m.weights);
  w.f64s(m.means);
  w.f64s(m.stddevs);
  return w.take();
}

GmmModel decode_gmm(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  GmmModel m;
  m.num_components = r.u32();
  m.dim = r.u32();
  m.seed = r.u64();
  m.weight_floor = r.f64();
  m.variance_floor = r.f64();
  if (m.num_components == 0 || m.dim == 0) throw DataError("gmm record has invalid dimensions");
  m.weights = r.f64s(m.num_components);
  m.means = r.f64s(m.num_components * m.dim);
  m.stddevs = r.f64s(m.num_components * m.dim);
  expect_end(r, "gmm");
  try {
    validate(m);
  } catch (const ConfigError& e) {
    throw DataError(std::string("gmm record: ") + e.what());
  }
  return m;
}

std::vector<std::uint8_t> encode_net(const nn::ConvNet& net, std::span<const double> aux_weights) {
  const auto& s = net.spec();
  if (aux_weights.size() != s.heads.size())
    throw ConfigError("one auxiliary weight is needed per head");
  ByteWriter w;
  w.u32(u32_of(s.input.height));
  w.u32(u32_of(s.input.width));
  w.u32(u32_of(s.input.channels));
  w.u32(u32_of(s.num_classes));
  w.u32(u32_of(s.layers.size()));
  for (const auto& l : s.layers) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(u32_of(l.kernel));
    w.u32(u32_of(l.stride));
    w.u32(u32_of(l.outputs));
  }
  w.u32(u32_of(s.heads.size()));
  for (const auto& h : s.heads) {
    w.u32(u32_of(h.attach_layer));
    w.u32(u32_of(h.channels));
    w.u32(u32_of(h.conv_kernel));
    w.u32(u32_of(h.pool_kernel));
    w.u32(u32_of(h.pool_stride));
  }
  w.f64s(aux_weights);
  w.u64(net.num_params());
  w.f64s(net.params());
  return w.take();
}

NetRecord decode_net(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  nn::ConvNetSpec s;
  s.input.height = r.u32();
  s.input.width = r.u32();
  s.input.channels = r.u32();
  s.num_classes = r.u32();
  const std::size_t n_layers = r.u32();
  if (n_layers > 4096) throw DataError("net record has an implausible layer count");
  for (std::size_t i = 0; i < n_layers; ++i) {
    nn::LayerSpec l;
    const std::uint32_t kind = r.u32();
    if (kind > 2) throw DataError("net record has an unknown layer kind");
    l.kind = static_cast<nn::LayerKind>(kind);
    l.kernel = r.u32();
    l.stride = r.u32();
    l.outputs = r.u32();
    s.layers.push_back(l);
  }
  const std::size_t n_heads = r.u32();
  if (n_heads > 4096) throw DataError("net record has an implausible head count");
  for (std::size_t i = 0; i < n_heads; ++i) {
    nn::LcsHeadSpec h;
    h.attach_layer = r.u32();
    h.channels = r.u32();
    h.conv_kernel = r.u32();
    h.pool_kernel = r.u32();
    h.pool_stride = r.u32();
    s.heads.push_back(h);
  }
  NetRecord rec;
  rec.aux_weights = r.f64s(n_heads);
  const std::size_t count = r.u64();
  std::vector<double> params = r.f64s(count);
  expect_end(r, "net");
  try {
    rec.net = nn::ConvNet(std::move(s), std::move(params));
  } catch (const ShapeError& e) {
    throw DataError(std::string("net record: ") + e.what());
  }
  return rec;
}

std::vector<std::uint8_t> encode_svm(const SvmModel& m) {
  ByteWriter w;
  w.u32(u32_of(m.num_classes));
  w.u32(u32_of(m.dim));
  w.f64(m.c);
  w.f64s(m.weights);
  w.f64s(m.biases);
  return w.take();
}

SvmModel decode_svm(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  SvmModel m;
  m.num_classes = r.u32();
  m.dim = r.u32();
  m.c = r.f64();
  if (m.num_classes < 2 || m.dim == 0) throw DataError("svm record has invalid dimensions");
  m.weights = r.f64s(m.num_classes * m.dim);
  m.biases = r.f64s(m.num_classes);
  expect_end(r, "svm");
  return m;
}

std::vector<std::uint8_t> encode_bow_codebook(const BowCodebook& c) {
  ByteWriter w;
  w.u32(u32_of(c.size()));
  w.u32(u32_of(c.dim));
  w.f64s(c.centers);
  return w.take();
}

BowCodebook decode_bow_codebook(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const std::size_t k = r.u32();
  BowCodebook c;
  c.dim = r.u32();
  if (k == 0 || c.dim == 0) throw DataError("bow record has invalid dimensions");
  c.centers = r.f64s(k * c.dim);
  expect_end(r, "bow");
  return c;
}

std::vector<std::uint8_t> encode_container(std::span<const ModelRecord> records) {
  ByteWriter w;
  w.tag("FVM1");
  w.u32(kFvm1Version);
  w.u32(u32_of(records.size()));
  for (const auto& rec : records) {
    w.tag(rec.tag);
    w.u64(rec.payload.size());
    w.bytes(rec.payload);
  }
  return w.take();
}

std::vector<ModelRecord> decode_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.tag() != "FVM1") throw DataError("not an FVM1 container (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kFvm1Version)
    throw DataError("unsupported FVM1 version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<ModelRecord> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    ModelRecord rec;
    rec.tag = r.tag();
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) throw DataError("FVM1 record overruns the file");
    auto b = r.bytes(static_cast<std::size_t>(len));
    rec.payload.assign(b.begin(), b.end());
    out.push_back(std::move(rec));
  }
  if (!r.at_end()) throw DataError("FVM1 container has trailing bytes");
  return out;
}

void save_models(const std::filesystem::path& path, std::span<const ModelRecord> records) {
  write_file_bytes(path, encode_container(records));
}

std::vector<ModelRecord> load_models(const std::filesystem::path& path) {
  try {
    return decode_container(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

const ModelRecord& find_record(std::span<const ModelRecord> records, std::string_view tag) {
  for (const auto& r : records)
    if (r.tag == tag) return r;
  throw DataError("container has no '" + std::string(tag) + "' record");
}

namespace {

void save_one(const std::filesystem::path& path, std::string tag, std::vector<std::uint8_t> payload) {
  const ModelRecord rec{std::move(tag), std::move(payload)};
  save_models(path, std::span<const ModelRecord>(&rec, 1));
}

template <typename Decode>
auto load_one(const std::filesystem::path& path, std::string_view tag, Decode decode) {
  const auto records = load_models(path);
  try {
    return decode(find_record(records, tag).payload);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_pca(const std::filesystem::path& path, const PcaModel& m) { save_one(path, "pca ", encode_pca(m)); }
void save_gmm(const std::filesystem::path& path, const GmmModel& m) { save_one(path, "gmm ", encode_gmm(m)); }
void save_net(const std::filesystem::path& path, const nn::ConvNet& net,
              std::span<const double> aux_weights) {
  save_one(path, "net ", encode_net(net, aux_weights));
}
void save_svm(const std::filesystem::path& path, const SvmModel& m) { save_one(path, "svm ", encode_svm(m)); }
void save_bow(const std::filesystem::path& path, const BowCodebook& c) {
  save_one(path, "bow ", encode_bow_codebook(c));
}

PcaModel load_pca(const std::filesystem::path& path) { return load_one(path, "pca ", decode_pca); }
GmmModel load_gmm(const std::filesystem::path& path) { return load_one(path, "gmm ", decode_gmm); }
NetRecord load_net(const std::filesystem::path& path) { return load_one(path, "net ", decode_net); }
SvmModel load_svm(const std::filesystem::path& path) { return load_one(path, "svm ", decode_svm); }
BowCodebook load_bow(const std::filesystem::path& path) {
  return load_one(path, "bow ", decode_bow_codebook);
}

}  // namespace lsdhm
