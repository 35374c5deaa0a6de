#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsdhm/convnet.hpp"
#include "lsdhm/fisher.hpp"
#include "lsdhm/gmm.hpp"
#include "lsdhm/pca.hpp"
#include "lsdhm/svm.hpp"

namespace lsdhm {

// "FVM1" model container:
//   magic "FVM1" | u32 version | u32 record count |
//   records of (4-byte tag, u64 payload length, payload), little endian.
//
// Payloads (u32 = uint32, f64 = IEEE double):
//   "pca " u32 D, u32 M, u32 whitened, f64 mean[D], f64 basis[M*D], f64 variance[M]
//   "gmm " u32 K, u32 M, u64 seed, f64 weight_floor, f64 variance_floor,
//          f64 weights[K], f64 means[K*M], f64 stddevs[K*M]
//   "net " u32 H, W, C, u32 classes, u32 layer count, per layer u32 kind/kernel/stride/outputs,
//          u32 head count, per head u32 attach/channels/conv_kernel/pool_kernel/pool_stride,
//          f64 aux weight per head, u64 parameter count, f64 params[...]
//   "svm " u32 classes, u32 dim, f64 C, f64 weights[classes*dim], f64 biases[classes]
//   "bow " u32 K_bow, u32 dim, f64 centers[K_bow*dim]
inline constexpr std::uint32_t kFvm1Version = 1;

struct ModelRecord {
  std::string tag;
  std::vector<std::uint8_t> payload;
};

struct NetRecord {
  nn::ConvNet net;
  std::vector<double> aux_weights;
};

std::vector<std::uint8_t> encode_pca(const PcaModel& m);
std::vector<std::uint8_t> encode_gmm(const GmmModel& m);
std::vector<std::uint8_t> encode_net(const nn::ConvNet& net, std::span<const double> aux_weights);
std::vector<std::uint8_t> encode_svm(const SvmModel& m);
std::vector<std::uint8_t> encode_bow_codebook(const BowCodebook& c);

PcaModel decode_pca(std::span<const std::uint8_t> payload);
GmmModel decode_gmm(std::span<const std::uint8_t> payload);
NetRecord decode_net(std::span<const std::uint8_t> payload);
SvmModel decode_svm(std::span<const std::uint8_t> payload);
BowCodebook decode_bow_codebook(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_container(std::span<const ModelRecord> records);
std::vector<ModelRecord> decode_container(std::span<const std::uint8_t> bytes);

void save_models(const std::filesystem::path& path, std::span<const ModelRecord> records);
std::vector<ModelRecord> load_models(const std::filesystem::path& path);

// First record with `tag`; throws DataError if there is none.
const ModelRecord& find_record(std::span<const ModelRecord> records, std::string_view tag);

// Single-model convenience wrappers.
void save_pca(const std::filesystem::path& path, const PcaModel& m);
void save_gmm(const std::filesystem::path& path, const GmmModel& m);
void save_net(const std::filesystem::path& path, const nn::ConvNet& net,
              std::span<const double> aux_weights);
void save_svm(const std::filesystem::path& path, const SvmModel& m);
void save_bow(const std::filesystem::path& path, const BowCodebook& c);
PcaModel load_pca(const std::filesystem::path& path);
GmmModel load_gmm(const std::filesystem::path& path);
NetRecord load_net(const std::filesystem::path& path);
SvmModel load_svm(const std::filesystem::path& path);
BowCodebook load_bow(const std::filesystem::path& path);

}  // namespace lsdhm
