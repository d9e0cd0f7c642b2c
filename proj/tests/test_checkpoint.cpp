#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <utility>

#include "lrc/checkpoint.hpp"
#include "lrc/error.hpp"

namespace lrc {
namespace {

namespace fs = std::filesystem;

class Checkpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lrc_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

const EncoderConfig kConfig{8, 8, 2, 8, 2, 12, 3};

TEST_F(Checkpoint, RoundTripIsBitExact) {
  const EncoderModel m = EncoderModel::init(kConfig, 42);
  const fs::path manifest = save_checkpoint(m, dir_ / "model");
  EXPECT_EQ(manifest, dir_ / "model.json");
  for (const fs::path& p : {dir_ / "model", manifest}) {
    EncoderModel back = load_checkpoint(p);
    EXPECT_EQ(back.config(), kConfig);
    auto a = m.parameters();
    auto b = std::as_const(back).parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value(), b[i]->value()) << a[i]->name();
  }
}

TEST_F(Checkpoint, BlobSizeMatchesParameterCount) {
  save_checkpoint(EncoderModel::init(kConfig, 1), dir_ / "m");
  EXPECT_EQ(fs::file_size(dir_ / "m.bin"), param_count(kConfig) * sizeof(double));
}

TEST_F(Checkpoint, SavingTwiceIsByteIdentical) {
  const EncoderModel m = EncoderModel::init(kConfig, 3);
  save_checkpoint(m, dir_ / "a");
  save_checkpoint(m, dir_ / "b");
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir_ / "a.bin"), slurp(dir_ / "b.bin"));
}

TEST_F(Checkpoint, MissingOrTruncatedFilesAreInputErrors) {
  EXPECT_THROW(load_checkpoint(dir_ / "absent"), InputError);
  save_checkpoint(EncoderModel::init(kConfig, 1), dir_ / "t");
  fs::resize_file(dir_ / "t.bin", 100);
  EXPECT_THROW(load_checkpoint(dir_ / "t"), InputError);
  std::ofstream(dir_ / "bad.json") << "{not json";
  EXPECT_THROW(load_checkpoint(dir_ / "bad.json"), InputError);
}

TEST(CheckpointConfig, JsonRoundTrip) {
  EXPECT_EQ(encoder_config_from_json(to_json(kConfig)), kConfig);
  auto j = to_json(kConfig);
  j.erase("hidden_size");
  EXPECT_THROW(encoder_config_from_json(j), ConfigError);
}

}  // namespace
}  // namespace lrc
