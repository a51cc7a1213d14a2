// Copyright 2026 The ese-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ese/model_io.hpp"
#include "test_util.hpp"

namespace ese {
namespace {

using testing::random_layer;
using testing::TempDir;

TEST(Sha256, KnownVector) {
  const std::string s = "abc";
  const Bytes b(s.begin(), s.end());
  EXPECT_EQ(sha256_hex(b), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(LittleEndian, RoundTripsSpecialDoubles) {
  const std::vector<double> v = {0.0, -0.0, 1.5, -3.25e-300, std::numeric_limits<double>::max(),
                                 std::numeric_limits<double>::denorm_min()};
  const auto bytes = encode_le<double>(v);
  ASSERT_EQ(bytes.size(), v.size() * 8);
  EXPECT_EQ(bytes[8], 0x00);
  EXPECT_EQ(bytes[15], 0x80);  // sign bit of -0.0, last byte
  const auto back = decode_le<double>(bytes);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
  EXPECT_EQ(back, v);
}

TEST(LittleEndian, IntegersAndBits) {
  const std::vector<std::int32_t> v = {-1, 0, 0x12345678};
  const auto b = encode_le<std::int32_t>(v);
  EXPECT_EQ(b[8], 0x78);
  EXPECT_EQ(b[11], 0x12);
  EXPECT_EQ(decode_le<std::int32_t>(b), v);
  EXPECT_THROW(decode_le<std::int32_t>(std::span<const std::uint8_t>(b.data(), 5)), CorruptionError);

  const std::vector<bool> bits = {true, false, true, true, false, false, false, false, true};
  const auto packed = pack_bits(bits);
  ASSERT_EQ(packed.size(), 2u);
  EXPECT_EQ(packed[0], 0x0D);
  EXPECT_EQ(unpack_bits(packed, bits.size()), bits);
}

TEST(ModelIo, SaveLoadIsBitwiseEqual) {
  TempDir dir;
  const std::vector<LstmParams> layers = {random_layer({5, 6, 4, true, true}, 1),
                                          random_layer({4, 3, 3, false, false}, 2)};
  save_model(layers, dir / "m.json");
  const Model back = load_model(dir / "m.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], layers[0]);
  EXPECT_EQ(back[1], layers[1]);
}

TEST(ModelIo, SavingTwiceIsByteIdentical) {
  TempDir dir;
  const std::vector<LstmParams> layers = {random_layer({5, 6, 4, true, true}, 3)};
  save_model(layers, dir / "a.json");
  save_model(layers, dir / "b.json");
  EXPECT_EQ(read_file(dir / "a.bin"), read_file(dir / "b.bin"));
  auto ja = read_json(dir / "a.json");
  auto jb = read_json(dir / "b.json");
  ja.erase("blob");
  jb.erase("blob");
  EXPECT_EQ(ja, jb);
}

TEST(ModelIo, DeclaredShapeDisagreesWithBlob) {
  TempDir dir;
  const std::vector<LstmParams> layers = {random_layer({153, 8, 4, true, true}, 4)};
  save_model(layers, dir / "m.json");
  json man = read_json(dir / "m.json");
  for (auto& rec : man["layers"][0]["tensors"]) {
    if (rec["name"] == "W_ix") rec["byte_len"] = 8 * 152 * 8;
  }
  write_json(dir / "m.json", man);
  EXPECT_THROW(load_model(dir / "m.json"), ShapeError);
}

TEST(ModelIo, TruncatedBlobReportsByteOffset) {
  TempDir dir;
  const std::vector<LstmParams> layers = {random_layer({5, 6, 4, true, true}, 5)};
  save_model(layers, dir / "m.json");
  auto blob = read_file(dir / "m.bin");
  blob.resize(1000);
  write_file(dir / "m.bin", blob);
  try {
    load_model(dir / "m.json");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 1000"), std::string::npos) << e.what();
  }
}

TEST(ModelIo, FlippedByteIsCorruption) {
  TempDir dir;
  const std::vector<LstmParams> layers = {random_layer({5, 6, 4, true, true}, 6)};
  save_model(layers, dir / "m.json");
  auto blob = read_file(dir / "m.bin");
  blob[17] ^= 0x01;
  write_file(dir / "m.bin", blob);
  EXPECT_THROW(load_model(dir / "m.json"), CorruptionError);
}

TEST(ModelIo, MissingPathIsIoError) {
  EXPECT_THROW(load_model("/nonexistent/model.json"), IoError);
}

TEST(ModelIo, NonFiniteWeightsRejectedOnLoad) {
  TempDir dir;
  std::vector<LstmParams> layers = {random_layer({2, 2, 2, false, false}, 7)};
  save_model(layers, dir / "m.json");
  json man = read_json(dir / "m.json");
  auto blob = read_file(dir / "m.bin");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Bytes b;
  put_le(b, nan);
  std::copy(b.begin(), b.end(), blob.begin());
  write_file(dir / "m.bin", blob);
  man["layers"][0]["tensors"][0]["sha256"] = sha256_hex(std::span<const std::uint8_t>(blob.data(), 32));
  write_json(dir / "m.json", man);
  EXPECT_THROW(load_model(dir / "m.json"), NumericError);
}

}  // namespace
}  // namespace ese
