/*
 *  Copyright 2026 The radseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */


#include "radseg/errors.hpp"
#include "radseg/phantom.hpp"

#include <gtest/gtest.h>

#include <set>

namespace {

using namespace radseg;
using namespace radseg::phantom;

const TissueClass* find(const Phantom& ph, const std::string& name) {
  for (const auto& t : ph.tissues)
    if (t.name == name) return &t;
  return nullptr;
}

TEST(Phantom, SameSeedSamePhantom) {
  PhantomOptions o;
  o.bias_amplitude = 0.2;
  const auto a = generate_phantom(42, 64, Difficulty::t2_only, o);
  const auto b = generate_phantom(42, 64, Difficulty::t2_only, o);
  const auto c = generate_phantom(43, 64, Difficulty::t2_only, o);
  EXPECT_TRUE((a.labels == b.labels).all());
  EXPECT_EQ(a.describe(), b.describe());
  EXPECT_TRUE((*a.bias == *b.bias).all());
  EXPECT_FALSE((a.labels == c.labels).all());
}

TEST(Phantom, RejectsBadSize) {
  EXPECT_THROW(generate_phantom(1, 16, Difficulty::easy), ValidationError);
  EXPECT_THROW(generate_phantom(1, 72, Difficulty::easy), ValidationError);
}

TEST(Phantom, StructureOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto ph = generate_phantom(seed, 64, Difficulty::t2_only);
    ASSERT_NO_THROW(ph.validate());
    EXPECT_EQ(ph.tissue(ph.liver_id).name, "liver");
    const double body = static_cast<double>(ph.body_mask().cast<int>().sum());
    const double liver = static_cast<double>(ph.liver_mask().cast<int>().sum());
    EXPECT_GT(liver / body, 0.1) << seed;
    EXPECT_LT(liver / body, 0.5) << seed;
    // Air border: nothing touches the image edge.
    EXPECT_EQ(ph.labels.row(0).cast<int>().sum() + ph.labels.col(0).cast<int>().sum(), 0) << seed;
    std::set<int> present(ph.labels.data(), ph.labels.data() + ph.labels.size());
    for (std::size_t k = 1; k <= ph.tissues.size(); ++k) EXPECT_TRUE(present.count(static_cast<int>(k))) << seed;
  }
}

TEST(Phantom, T2OnlyDistractorsMatchLiverButDifferInT2) {
  PhantomOptions o;
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto ph = generate_phantom(seed, 64, Difficulty::t2_only, o);
    const auto& liver = ph.tissue(ph.liver_id);
    const auto* pd = find(ph, "pd_matched");
    const auto* comp = find(ph, "composite_matched");
    ASSERT_TRUE(pd && comp) << seed;
    EXPECT_NEAR(pd->pd / liver.pd, 1.0, 0.031);
    EXPECT_NEAR(composite_weight(comp->t2_ms, o.echo_spacing_ms, o.etl) * comp->pd,
                composite_weight(liver.t2_ms, o.echo_spacing_ms, o.etl) * liver.pd, 1e-12);
    for (const auto* d : {pd, comp}) EXPECT_GE(std::abs(d->t2_ms / liver.t2_ms - 1.0), 0.3) << seed;
  }
}

TEST(Phantom, EasyHasNoMatchedDistractors) {
  const auto ph = generate_phantom(5, 64, Difficulty::easy);
  EXPECT_EQ(find(ph, "pd_matched"), nullptr);
  EXPECT_EQ(find(ph, "composite_matched"), nullptr);
}

TEST(Phantom, ImagesFollowLabels) {
  const auto ph = generate_phantom(8, 64, Difficulty::t2_only);
  const auto im = pd_t2_images(ph);
  for (Index i = 0; i < ph.labels.size(); ++i) {
    const int l = ph.labels.data()[i];
    if (l == 0) {
      EXPECT_EQ(im.pd.data()[i], 0.0);
      EXPECT_EQ(im.t2.data()[i], 0.0);
    } else {
      EXPECT_EQ(im.t2.data()[i], ph.tissue(static_cast<std::uint8_t>(l)).t2_ms);
    }
  }
  EXPECT_TRUE((im.liver == ph.liver_mask()).all());
}

TEST(BiasField, MeanOneWithinAmplitude) {
  for (double a : {0.1, 0.3}) {
    const Image b = synth_bias_field(3, 64, a);
    EXPECT_NEAR(b.mean(), 1.0, 1e-12);
    EXPECT_NEAR((b - 1.0).abs().maxCoeff(), a, 1e-12);
  }
  EXPECT_TRUE((synth_bias_field(3, 32, 0.0) == 1.0).all());
  EXPECT_THROW(synth_bias_field(3, 32, 1.0), ValidationError);
}

TEST(CompositeWeight, HandValue) {
  // Two echoes at 10 and 20 ms, T2 = 10 ms.
  EXPECT_NEAR(composite_weight(10.0, 10.0, 2), 0.5 * (std::exp(-1.0) + std::exp(-2.0)), 1e-15);
}

TEST(Difficulty, NamesRoundTrip) {
  for (auto d : {Difficulty::easy, Difficulty::t2_only}) EXPECT_EQ(parse_difficulty(to_string(d)), d);
  EXPECT_THROW(parse_difficulty("hard"), ConfigError);
}

TEST(Tissue, Validation) {
  EXPECT_THROW((TissueClass{"x", 0.0, 50.0}.validate()), ValidationError);
  EXPECT_THROW((TissueClass{"x", 1.0, -1.0}.validate()), ValidationError);
}

}  // namespace
