#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "lsdhm/error.hpp"
#include "lsdhm/model_io.hpp"
#include "oracles.hpp"

using namespace lsdhm;

namespace {

PcaModel some_pca(oracle::Gen& gen) {
  oracle::Mat x;
  for (int i = 0; i < 30; ++i) x.push_back(gen.vec(5));
  return fit_pca(oracle::to_set(x), 3);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lsdhm_unit_" + name);
}

}  // namespace

TEST_CASE("every record type round-trips bitwise") {
  oracle::Gen gen(41);
  const PcaModel pca = some_pca(gen);
  CHECK(decode_pca(encode_pca(pca)) == pca);

  GmmModel gmm = gen.gmm(4, 3);
  gmm.seed = 0xDEADBEEFCAFEull;
  CHECK(decode_gmm(encode_gmm(gmm)) == gmm);

  const SvmModel svm{3, 4, 0.1, gen.vec(12), gen.vec(3)};
  CHECK(decode_svm(encode_svm(svm)) == svm);

  const BowCodebook bow{2, gen.vec(10)};
  CHECK(decode_bow_codebook(encode_bow_codebook(bow)) == bow);

  const nn::ConvNet net(nn::ConvNetSpec::desk_default(10), 3);
  const NetRecord back = decode_net(encode_net(net, std::vector<double>{0.3}));
  CHECK(back.net.spec() == net.spec());
  CHECK(back.aux_weights == std::vector<double>{0.3});
  REQUIRE(back.net.num_params() == net.num_params());
  CHECK(std::memcmp(back.net.params().data(), net.params().data(), net.num_params() * 8) == 0);
}

TEST_CASE("files hold several records") {
  oracle::Gen gen(42);
  const PcaModel pca = some_pca(gen);
  const GmmModel gmm = gen.gmm(2, 3);
  const auto path = temp_file("models.fvm");
  const std::vector<ModelRecord> records = {{"pca ", encode_pca(pca)}, {"gmm ", encode_gmm(gmm)}};
  save_models(path, records);
  const auto loaded = load_models(path);
  REQUIRE(loaded.size() == 2);
  CHECK(decode_gmm(find_record(loaded, "gmm ").payload) == gmm);
  CHECK_THROWS_AS(find_record(loaded, "svm "), DataError);
  save_pca(path, pca);
  CHECK(load_pca(path) == pca);
  CHECK_THROWS_AS(load_gmm(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_pca(path), DataError);
}

TEST_CASE("corrupt containers are rejected") {
  oracle::Gen gen(43);
  const std::vector<ModelRecord> records = {{"pca ", encode_pca(some_pca(gen))}};
  const auto good = encode_container(records);
  CHECK(decode_container(good).size() == 1);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad_magic), DataError);

  auto bad_version = good;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_container(bad_version), DataError);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_container(truncated), DataError);

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_container(trailing), DataError);

  auto payload = encode_pca(some_pca(gen));
  payload.pop_back();
  CHECK_THROWS_AS(decode_pca(payload), DataError);

  auto gmm = encode_gmm(gen.gmm(2, 2));
  // first stddev of the first component set to -1
  const std::size_t offset = 4 + 4 + 8 + 8 + 8 + 2 * 8 + 4 * 8;
  const double neg = -1.0;
  std::memcpy(gmm.data() + offset, &neg, 8);
  CHECK_THROWS_AS(decode_gmm(gmm), DataError);
}
