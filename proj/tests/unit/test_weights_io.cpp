#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "sunroll/weights_io.hpp"
#include "test_util.hpp"

using namespace sunroll;

TEST(WeightsIo, RoundTripIsBitExact) {
  for (auto mode : {WeightMode::shared, WeightMode::changing}) {
    for (bool symmetric : {true, false}) {
      const auto stack = ProximalStack::gaussian(mode, 6, 3, {5, 4}, symmetric, 0.7, 13);
      const auto back = decode_weights(encode_weights(stack));
      EXPECT_TRUE(back == stack);
      EXPECT_EQ(back.mode(), mode);
      EXPECT_EQ(back.symmetric(), symmetric);
    }
  }
}

TEST(WeightsIo, HeaderLayout) {
  const auto stack = ProximalStack::zeros(WeightMode::changing, 3, 2, {4}, true);
  const std::string bytes = encode_weights(stack);
  ASSERT_GE(bytes.size(), 5u);
  EXPECT_EQ(bytes.substr(0, 5), "SUNW1");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)]);
    return v;
  };
  EXPECT_EQ(u32(5), 1u);   // weight-changing, symmetric
  EXPECT_EQ(u32(9), 2u);   // T
  EXPECT_EQ(u32(13), 1u);  // K
  EXPECT_EQ(u32(17), 4u);  // l_1
  EXPECT_EQ(u32(21), 3u);  // n_1
  EXPECT_EQ(bytes.size(), 25u + 2u * 4u * 3u * 8u);
}

TEST(WeightsIo, RejectsCorruption) {
  const std::string bytes = encode_weights(ProximalStack::zeros(WeightMode::shared, 3, 2, {4}, true));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_weights(bad_magic), HeaderError);
  EXPECT_THROW(decode_weights(bytes.substr(0, bytes.size() - 3)), TruncatedError);
  EXPECT_THROW(decode_weights(bytes.substr(0, 7)), TruncatedError);
  EXPECT_THROW(decode_weights(bytes + "x"), FormatError);
}

TEST(WeightsIo, FileRoundTrip) {
  const auto dir = sunroll::test::scratch_dir("weights_io");
  const auto stack = ProximalStack::gaussian(WeightMode::shared, 4, 2, {3}, true, 1.0, 5);
  const auto path = (dir / "w.sunw").string();
  save_weights(path, stack);
  EXPECT_TRUE(load_weights(path) == stack);
  EXPECT_THROW(load_weights((dir / "missing.sunw").string()), Error);
}
