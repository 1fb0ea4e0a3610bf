#include <gtest/gtest.h>

#include <set>

#include "pcssm/serialization.hpp"
#include "test_util.hpp"

namespace pcssm {
namespace {

using testing::random_coords;
using testing::random_tensor;

TEST(Axes, ParseCanonicalOrder) {
  EXPECT_EQ(parse_axes("xyz"), (std::vector<Axis>{Axis::z, Axis::y, Axis::x}));
  EXPECT_EQ(parse_axes("X,Z"), (std::vector<Axis>{Axis::z, Axis::x}));
  EXPECT_EQ(parse_axes("None"), (std::vector<Axis>{Axis::none}));
  EXPECT_THROW(parse_axes("w"), ConfigError);
  EXPECT_THROW(parse_axes(""), ConfigError);
  EXPECT_EQ(axes_label(parse_axes("yx")), "YX");
  EXPECT_EQ(all_axis_subsets().size(), 7u);
}

TEST(AxisPermutation, HandExample) {
  const std::vector<Vec3> c{{0, 0, 0.5}, {0, 0, 0.1}, {0, 0, 0.9}};
  const auto o = make_axis_order(c, Axis::z);
  EXPECT_EQ(o.perm, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(o.inverse, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(axis_permutation(c, Axis::none), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(AxisPermutation, TiesBreakLexicographicallyThenByIndex) {
  const std::vector<Vec3> c{{1, 0, 0}, {0, 5, 0}, {0, 5, 0}, {0, 1, 0}};
  EXPECT_EQ(axis_permutation(c, Axis::z), (std::vector<std::size_t>{3, 1, 2, 0}));
}

TEST(AxisPermutation, ValidOnRandomAndDegenerateClouds) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = rng() % 40;
    std::vector<Vec3> c;
    if (trial % 10 == 0) {
      c.assign(n, Vec3{0.25, -0.5, 1.0});
    } else {
      c = random_coords(rng, n);
      // snap some points onto a coarse lattice to create ties
      for (auto& p : c) {
        if (rng() % 3 == 0) p[rng() % 3] = std::round(p[rng() % 3] * 2.0) / 2.0;
      }
    }
    for (Axis a : {Axis::z, Axis::y, Axis::x, Axis::none}) {
      const auto o = make_axis_order(c, a);
      ASSERT_TRUE(is_permutation(o.perm, n));
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(o.perm[o.inverse[i]], i);
      if (a == Axis::none) continue;
      const int k = a == Axis::x ? 0 : a == Axis::y ? 1 : 2;
      for (std::size_t i = 1; i < n; ++i) ASSERT_LE(c[o.perm[i - 1]][k], c[o.perm[i]][k]);
    }
    if (trial % 10 == 0) {
      EXPECT_EQ(axis_permutation(c, Axis::x), axis_permutation(c, Axis::none));
    }
    if (n > 0) {
      const auto h = hilbert_serialize(c, 0.05, CurveVariant::hilbert);
      ASSERT_TRUE(is_permutation(h.perm, n));
      if (trial % 10 == 0 && n > 1) EXPECT_TRUE(h.warning.has_value());
    }
  }
}

// Identity processing: every sequence is returned as-is (plus its prompt row).
TEST(ExpandMerge, MarkerRoundTripForAllSubsets) {
  std::mt19937_64 rng(2);
  const std::size_t L = 17, D = 5;
  const auto coords = random_coords(rng, L);
  std::vector<double> marker(L * D);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < D; ++j) marker[i * D + j] = double(i) * 10.0 + double(j);
  }
  const auto features = Tensor<double>::from_data({L, D}, marker);
  for (const auto& axes : all_axis_subsets()) {
    for (bool prompt : {false, true}) {
      const auto set = expand<double>(coords, features, axes);
      ASSERT_EQ(set.size(), axes.size());
      std::vector<Tensor<double>> processed;
      std::vector<AxisOrder> orders;
      const auto p = Tensor<double>::full({D}, -99.0);
      for (const auto& s : set) {
        for (std::size_t i = 0; i < L; ++i) {
          for (std::size_t j = 0; j < D; ++j) ASSERT_EQ(s.features.at(i, j), marker[s.order.perm[i] * D + j]);
          ASSERT_EQ(s.coords[i], coords[s.order.perm[i]]);
        }
        processed.push_back(attach_prompt_and_positions<double>(s.features, prompt ? p : Tensor<double>(), {},
                                                                nullptr, s.coords));
        orders.push_back(s.order);
      }
      const auto out = merge(processed, orders, MergeReducer<double>::block_mean(axes.size(), D), prompt);
      ASSERT_EQ(out.shape(), (Shape{L, D}));
      for (std::size_t i = 0; i < L * D; ++i) EXPECT_NEAR(out[i], marker[i], 1e-12) << axes_label(axes);
    }
  }
}

TEST(ExpandMerge, RejectsBadInputs) {
  const std::vector<Vec3> c{{0, 0, 0}, {1, 1, 1}};
  EXPECT_THROW(expand<double>(c, Tensor<double>::zeros({2, 3}), {}), ConfigError);
  EXPECT_THROW(expand<double>(c, Tensor<double>::zeros({3, 3}), {Axis::z}), DimensionError);
  const auto o = make_axis_order(c, Axis::z);
  EXPECT_THROW(merge<double>({Tensor<double>::zeros({3, 2})}, {o}, MergeReducer<double>::block_mean(1, 2), false),
               ContractError);
}

TEST(Prompt, LeadsTheSequenceAndIsDroppedByMerge) {
  std::mt19937_64 rng(3);
  const auto seq = random_tensor(rng, {4, 3});
  const auto prompt = Tensor<double>::from_data({3}, {7, 8, 9});
  const auto pos = Tensor<double>::from_data({1, 3}, {1, 1, 1});
  const auto out = attach_prompt_and_positions<double>(seq, prompt, pos, nullptr, {});
  ASSERT_EQ(out.shape(), (Shape{5, 3}));
  EXPECT_EQ(out.at(0, 0), 8.0);
  EXPECT_EQ(out.at(0, 2), 10.0);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(out[3 + i], seq[i]);
  const auto empty = attach_prompt_and_positions<double>(Tensor<double>::zeros({0, 3}), prompt, {}, nullptr, {});
  EXPECT_EQ(empty.shape(), (Shape{1, 3}));

  // Two processed sequences that differ only in their prompt row merge identically.
  const std::vector<Vec3> c{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  const auto o = make_axis_order(c, Axis::x);
  auto alt = out.to_vector();
  alt[0] = alt[1] = alt[2] = 1e6;
  const auto r = MergeReducer<double>::block_mean(1, 3);
  EXPECT_EQ(merge<double>({out}, {o}, r, true).to_vector(),
            merge<double>({Tensor<double>::from_data({5, 3}, alt)}, {o}, r, true).to_vector());
}

TEST(Prompt, PositionEmbeddingUsesSortedCoordinates) {
  const auto enc = PositionEncoder<double>::init(Initializer(0), "pos", 4);
  const std::vector<Vec3> c{{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.9}};
  const auto seq = Tensor<double>::zeros({2, 4});
  const auto out = attach_prompt_and_positions<double>(seq, {}, {}, &enc, c);
  const auto direct = enc(c);
  EXPECT_EQ(out.to_vector(), direct.to_vector());
  EXPECT_THROW(attach_prompt_and_positions<double>(seq, {}, {}, &enc, std::span<const Vec3>(c).first(1)),
               DimensionError);
}

TEST(Hilbert, OrderOneIsGrayCodeWalk) {
  // bits (x, y, z) of gray(i) = i ^ (i >> 1), x most significant
  for (std::uint32_t i = 0; i < 8; ++i) {
    const std::uint32_t gray = i ^ (i >> 1);
    const std::array<std::uint32_t, 3> cell{(gray >> 2) & 1u, (gray >> 1) & 1u, gray & 1u};
    EXPECT_EQ(hilbert_index(cell, 1), i);
  }
  // The z = 0 face is traversed as a U: (0,0) (0,1) (1,1) (1,0).
  std::vector<std::pair<std::uint64_t, std::array<std::uint32_t, 2>>> face;
  for (std::uint32_t x = 0; x < 2; ++x) {
    for (std::uint32_t y = 0; y < 2; ++y) face.push_back({hilbert_index({x, y, 0}, 1), {x, y}});
  }
  std::sort(face.begin(), face.end());
  const std::vector<std::array<std::uint32_t, 2>> u{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(face[i].second, u[i]);
}

TEST(Hilbert, HigherOrdersAreContinuousBijections) {
  for (unsigned order : {2u, 3u, 4u}) {
    const std::uint32_t side = 1u << order;
    std::vector<std::array<std::uint32_t, 3>> by_index(side * side * side);
    std::vector<char> seen(by_index.size(), 0);
    for (std::uint32_t x = 0; x < side; ++x) {
      for (std::uint32_t y = 0; y < side; ++y) {
        for (std::uint32_t z = 0; z < side; ++z) {
          const auto h = hilbert_index({x, y, z}, order);
          ASSERT_LT(h, by_index.size());
          ASSERT_FALSE(seen[h]);
          seen[h] = 1;
          by_index[h] = {x, y, z};
        }
      }
    }
    for (std::size_t i = 1; i < by_index.size(); ++i) {
      int manhattan = 0;
      for (int k = 0; k < 3; ++k) manhattan += std::abs(int(by_index[i][k]) - int(by_index[i - 1][k]));
      ASSERT_EQ(manhattan, 1) << "order " << order << " step " << i;
    }
  }
}

TEST(Hilbert, GridSizeChangesTheOrder) {
  std::mt19937_64 rng(4);
  auto c = random_coords(rng, 300, 0.15);
  const auto a = hilbert_serialize(c, 0.010, CurveVariant::hilbert);
  const auto b = hilbert_serialize(c, 0.015, CurveVariant::hilbert);
  const auto d = hilbert_serialize(c, 0.020, CurveVariant::hilbert);
  EXPECT_NE(a.perm, b.perm);
  EXPECT_NE(b.perm, d.perm);
  EXPECT_NE(a.perm, d.perm);
  EXPECT_NE(a.perm, hilbert_serialize(c, 0.010, CurveVariant::trans_hilbert).perm);
  EXPECT_THROW(hilbert_serialize(c, 0.0, CurveVariant::hilbert), ContractError);
}

TEST(Locality, HandExample) {
  const std::vector<Vec3> c{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  const std::vector<std::size_t> id{0, 1, 2}, swapped{0, 2, 1};
  EXPECT_DOUBLE_EQ(locality_score(c, id), 1.0);
  // ranks 0, 2, 1: |0-2| + |2-0| + |1-2| = 5
  EXPECT_DOUBLE_EQ(locality_score(c, swapped), 5.0 / 3.0);
}

}  // namespace
}  // namespace pcssm
