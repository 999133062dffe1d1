#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "cdgc/graph.hpp"
#include "cdgc/ops.hpp"
#include "cdgc/rng.hpp"
#include "cdgc/tensor.hpp"
#include "oracles.hpp"

using cdgc::ClassMasks;
using cdgc::Rng;
using cdgc::SampledSet;
using cdgc::TensorD;
using cdgc::TensorF;

namespace {

// Masks built from explicit per-class member lists.
ClassMasks make_masks(std::size_t classes, std::size_t nodes,
                      const std::vector<std::vector<std::uint32_t>>& lists) {
  ClassMasks masks;
  masks.num_classes = classes;
  masks.num_nodes = nodes;
  masks.bits.assign(classes * nodes, 0);
  for (std::size_t m = 0; m < lists.size(); ++m) {
    for (std::uint32_t i : lists[m]) masks.bits[m * nodes + i] = 1;
  }
  return masks;
}

std::set<std::uint32_t> as_set(const std::vector<std::uint32_t>& v) {
  return std::set<std::uint32_t>(v.begin(), v.end());
}

}  // namespace

TEST_CASE("argmax masks follow the dominant logit and break ties downward") {
  // Class 1 dominates pixel 0, class 0 dominates pixel 1, pixel 2 ties.
  auto logits = TensorF::from({2, 1, 3}, {0.1f, 0.9f, 0.5f, 0.7f, 0.3f, 0.5f});
  const ClassMasks masks = cdgc::class_masks_from_logits(logits);
  CHECK(masks.num_classes == 2);
  CHECK(masks.num_nodes == 3);
  CHECK(masks.contains(1, 0));
  CHECK(masks.contains(0, 1));
  CHECK(masks.contains(0, 2));  // tie goes to the lower class index
  CHECK_FALSE(masks.contains(1, 2));

  CHECK_THROWS_AS(cdgc::class_masks_from_logits(TensorF::zeros({1, 2, 2})), cdgc::ShapeError);
  CHECK_THROWS_AS(cdgc::class_masks_from_logits(TensorF::zeros({4, 4})), cdgc::ShapeError);
}

TEST_CASE("argmax masks partition the nodes") {
  Rng rng(42);
  auto logits = TensorF::uniform({4, 6, 5}, -2.0f, 2.0f, rng);
  const ClassMasks masks = cdgc::class_masks_from_logits(logits);
  const auto winner = oracles::argmax<float>(logits.values(), 4, 30);
  for (std::size_t i = 0; i < 30; ++i) {
    std::size_t owners = 0;
    for (std::size_t m = 0; m < 4; ++m) {
      if (masks.contains(m, i)) {
        ++owners;
        CHECK(m == static_cast<std::size_t>(winner[i]));
      }
    }
    CHECK(owners == 1);
  }
}

TEST_CASE("label masks skip the ignore index and reject junk") {
  const std::vector<std::int32_t> labels{0, 2, 255, 1, 1};
  const ClassMasks masks = cdgc::masks_from_labels(labels, 3);
  CHECK(as_set(masks.members(0)) == as_set({0}));
  CHECK((as_set(masks.members(1)) == as_set({3, 4})));
  CHECK(as_set(masks.members(2)) == as_set({1}));
  // The ignored pixel belongs nowhere.
  for (std::size_t m = 0; m < 3; ++m) CHECK_FALSE(masks.contains(m, 2));

  const std::vector<std::int32_t> bad{0, 3};
  CHECK_THROWS_AS(cdgc::masks_from_labels(bad, 3), cdgc::DataError);
  const std::vector<std::int32_t> negative{-1};
  CHECK_THROWS_AS(cdgc::masks_from_labels(negative, 3), cdgc::DataError);
}

TEST_CASE("hard-sample selection keeps disagreements and a measured slice of the overlap") {
  // Coarse {1,2,3} vs truth {2,3,4}: nodes 1 and 4 disagree, {2,3} agree.
  const ClassMasks coarse = make_masks(2, 6, {{}, {1, 2, 3}});
  const ClassMasks truth = make_masks(2, 6, {{}, {2, 3, 4}});

  Rng rng(7);
  const SampledSet half = cdgc::dynamic_sample(coarse, truth, 0.5, rng);
  const auto& group = half.groups[1];
  CHECK(group.size() == 3);  // 2 disagreements + floor(0.5 * 2) overlap draws
  CHECK(std::binary_search(group.begin(), group.end(), 1u));
  CHECK(std::binary_search(group.begin(), group.end(), 4u));
  const bool has2 = std::binary_search(group.begin(), group.end(), 2u);
  const bool has3 = std::binary_search(group.begin(), group.end(), 3u);
  CHECK(has2 != has3);  // exactly one of the overlap pair survives

  SUBCASE("ratio one keeps the whole union") {
    Rng r(1);
    const SampledSet all = cdgc::dynamic_sample(coarse, truth, 1.0, r);
    CHECK((as_set(all.groups[1]) == as_set({1, 2, 3, 4})));
  }
  SUBCASE("perfect agreement samples only from the class itself") {
    const ClassMasks eight = make_masks(2, 10, {{}, {0, 1, 2, 3, 4, 5, 6, 7}});
    Rng r(3);
    const SampledSet quarter = cdgc::dynamic_sample(eight, eight, 0.25, r);
    CHECK(quarter.groups[1].size() == 2);
    for (std::uint32_t v : quarter.groups[1]) CHECK(v < 8);
    CHECK(quarter.groups[0].empty());
  }
  SUBCASE("ratio zero keeps only the disagreements") {
    Rng r(5);
    const SampledSet none = cdgc::dynamic_sample(coarse, truth, 0.0, r);
    CHECK((as_set(none.groups[1]) == as_set({1, 4})));
  }
  SUBCASE("argument validation") {
    Rng r(5);
    CHECK_THROWS_AS(cdgc::dynamic_sample(coarse, truth, 1.5, r), cdgc::UsageError);
    CHECK_THROWS_AS(cdgc::dynamic_sample(coarse, truth, -0.1, r), cdgc::UsageError);
    const ClassMasks other = make_masks(2, 5, {{}, {1}});
    CHECK_THROWS_AS(cdgc::dynamic_sample(coarse, other, 0.5, r), cdgc::ShapeError);
  }
}

TEST_CASE("hard-sample selection satisfies its set identities on random instances") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + rng.uniform_int(40);
    const std::size_t classes = 2 + rng.uniform_int(3);
    const double ratio = rng.uniform(0.0, 1.0);

    // Random coarse and truth partitions of the nodes.
    std::vector<std::int32_t> pred(n), gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<std::int32_t>(rng.uniform_int(classes));
      gt[i] = static_cast<std::int32_t>(rng.uniform_int(classes));
    }
    const ClassMasks coarse = cdgc::masks_from_labels(pred, classes);
    const ClassMasks truth = cdgc::masks_from_labels(gt, classes);
    const SampledSet sampled = cdgc::dynamic_sample(coarse, truth, ratio, rng);

    REQUIRE(sampled.groups.size() == classes);
    for (std::size_t m = 0; m < classes; ++m) {
      CHECK(std::is_sorted(sampled.groups[m].begin(), sampled.groups[m].end()));
      oracles::SampleSets sets;
      sets.coarse = as_set(coarse.members(m));
      sets.truth = as_set(truth.members(m));
      CHECK(oracles::check_sampled_invariants(sets, sampled.groups[m], ratio));
    }
  }
}

TEST_CASE("hard-sample selection is deterministic under a fixed seed") {
  Rng data_rng(4);
  std::vector<std::int32_t> pred(50), gt(50);
  for (std::size_t i = 0; i < 50; ++i) {
    pred[i] = static_cast<std::int32_t>(data_rng.uniform_int(3));
    gt[i] = static_cast<std::int32_t>(data_rng.uniform_int(3));
  }
  const ClassMasks coarse = cdgc::masks_from_labels(pred, 3);
  const ClassMasks truth = cdgc::masks_from_labels(gt, 3);
  Rng a(12), b(12);
  const SampledSet first = cdgc::dynamic_sample(coarse, truth, 0.5, a);
  const SampledSet second = cdgc::dynamic_sample(coarse, truth, 0.5, b);
  CHECK(first.groups == second.groups);
}

TEST_CASE("inference selection mirrors the coarse masks exactly") {
  const ClassMasks coarse = make_masks(3, 8, {{0, 5}, {1, 2}, {3, 4, 6, 7}});
  const SampledSet sampled = cdgc::inference_sample(coarse);
  REQUIRE(sampled.groups.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) CHECK(sampled.groups[m] == coarse.members(m));

  const SampledSet everything = cdgc::all_nodes_sample(5);
  REQUIRE(everything.groups.size() == 1);
  CHECK((everything.groups[0] == std::vector<std::uint32_t>{0, 1, 2, 3, 4}));
}

TEST_CASE("similarity scores equal the explicit bilinear form") {
  Rng rng(55);
  const std::size_t channels = 4, n = 7;
  auto x = TensorD::uniform({channels, n}, -1.0, 1.0, rng);
  auto w = TensorD::uniform({channels, channels}, -1.0, 1.0, rng);
  auto wp = TensorD::uniform({channels, channels}, -1.0, 1.0, rng);
  const std::vector<std::uint32_t> support{0, 2, 3, 6};
  auto scores = cdgc::similarity_scores(x, w, wp, support);
  REQUIRE((scores.shape() == cdgc::Shape{n, n}));

  // score(i,j) = (w x_i) . (w' x_j), evaluated with plain loops.
  auto transformed = [&](const TensorD& t, std::size_t node) {
    std::vector<double> out(channels, 0.0);
    for (std::size_t r = 0; r < channels; ++r) {
      for (std::size_t c = 0; c < channels; ++c) out[r] += t(r, c) * x(c, node);
    }
    return out;
  };
  const std::set<std::uint32_t> in_support(support.begin(), support.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (in_support.count(static_cast<std::uint32_t>(i)) &&
          in_support.count(static_cast<std::uint32_t>(j))) {
        const auto a = transformed(w, i);
        const auto bvec = transformed(wp, j);
        double want = 0.0;
        for (std::size_t c = 0; c < channels; ++c) want += a[c] * bvec[c];
        CHECK(scores(i, j) == doctest::Approx(want).epsilon(1e-12));
      } else {
        CHECK(scores(i, j) == 0.0);  // off-support entries stay exactly zero
      }
    }
  }
}

TEST_CASE("identity transforms reduce similarity to the gram matrix") {
  auto x = TensorD::from({2, 3}, {1, 0, 2, 0, 1, 2});
  std::vector<double> eye{1, 0, 0, 1};
  auto w = TensorD::from({2, 2}, eye);
  auto wp = TensorD::from({2, 2}, eye);
  const std::vector<std::uint32_t> support{0, 1, 2};
  auto scores = cdgc::similarity_scores(x, w, wp, support);
  CHECK(scores(0, 0) == 1.0);
  CHECK(scores(0, 1) == 0.0);  // orthogonal features score zero
  CHECK(scores(0, 2) == 2.0);
  CHECK(scores(2, 2) == 8.0);

  // A zero second transform annihilates every score.
  auto zeros = cdgc::similarity_scores(x, w, TensorD::zeros({2, 2}), support);
  for (double v : zeros.values()) CHECK(v == 0.0);

  const std::vector<std::uint32_t> empty;
  CHECK_THROWS_AS(cdgc::similarity_scores(x, w, wp, empty), cdgc::EmptyClassError);
  CHECK_THROWS_AS(cdgc::similarity_scores(x, TensorD::zeros({3, 3}), wp, support),
                  cdgc::ShapeError);
}

TEST_CASE("masked row softmax reproduces reference values") {
  auto scores = TensorF::from({3, 3}, {1, 2, 3, 0, 0, 0, -1, -1, 5});
  const std::vector<std::uint32_t> all{0, 1, 2};
  auto a = cdgc::row_softmax(scores, all);
  CHECK(a(0, 0) == doctest::Approx(0.09003057).epsilon(1e-4));
  CHECK(a(0, 1) == doctest::Approx(0.24472847).epsilon(1e-4));
  CHECK(a(0, 2) == doctest::Approx(0.66524096).epsilon(1e-4));
  // Equal scores spread uniformly.
  for (std::size_t j = 0; j < 3; ++j) CHECK(a(1, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  SUBCASE("partial support normalizes only the chosen columns") {
    const std::vector<std::uint32_t> pair{0, 2};
    auto b = cdgc::row_softmax(scores, pair);
    // Row 1 is not in the support, so it stays zero everywhere.
    for (std::size_t j = 0; j < 3; ++j) CHECK(b(1, j) == 0.0);
    // Column 1 is excluded from the normalization.
    CHECK(b(0, 1) == 0.0);
    CHECK(b(0, 0) + b(0, 2) == doctest::Approx(1.0).epsilon(1e-6));
    const std::vector<double> row0{1, 2, 3};
    const auto want = oracles::masked_softmax_row(row0, pair);
    CHECK(b(0, 0) == doctest::Approx(want[0]).epsilon(1e-6));
    CHECK(b(0, 2) == doctest::Approx(want[1]).epsilon(1e-6));
  }
  SUBCASE("single-member support concentrates all mass") {
    const std::vector<std::uint32_t> one{1};
    auto c = cdgc::row_softmax(scores, one);
    CHECK(c(1, 1) == 1.0);
    CHECK(c(0, 0) == 0.0);
    CHECK(c(1, 0) == 0.0);
  }
  SUBCASE("extreme scores stay finite thanks to max subtraction") {
    auto wide = TensorF::from({2, 2}, {80.0f, -80.0f, 79.0f, 80.0f});
    const std::vector<std::uint32_t> both{0, 1};
    auto d = cdgc::row_softmax(wide, both);
    CHECK(d(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(d(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(d(1, 0) + d(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("shape and support validation") {
    const std::vector<std::uint32_t> empty;
    CHECK_THROWS_AS(cdgc::row_softmax(scores, empty), cdgc::EmptyClassError);
    CHECK_THROWS_AS(cdgc::row_softmax(TensorF::zeros({2, 3}), all), cdgc::ShapeError);
    const std::vector<std::uint32_t> unsorted{2, 0};
    CHECK_THROWS_AS(cdgc::row_softmax(scores, unsorted), cdgc::UsageError);
  }
}

TEST_CASE("adjacency rows are stochastic on the support and zero elsewhere") {
  Rng rng(314);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6 + rng.uniform_int(20);
    const std::size_t channels = 3 + rng.uniform_int(4);
    const std::size_t classes = 2 + rng.uniform_int(3);
    auto x = TensorF::uniform({channels, n}, -1.0f, 1.0f, rng);
    auto w = TensorF::uniform({channels, channels}, -0.7f, 0.7f, rng);
    auto wp = TensorF::uniform({channels, channels}, -0.7f, 0.7f, rng);

    std::vector<std::int32_t> owner(n);
    for (auto& v : owner) v = static_cast<std::int32_t>(rng.uniform_int(classes));
    const SampledSet sampled = cdgc::inference_sample(cdgc::masks_from_labels(owner, classes));

    const auto adj = cdgc::build_adjacency(x, w, wp, sampled);
    REQUIRE(adj.per_class.size() == classes);
    for (std::size_t m = 0; m < classes; ++m) {
      const auto& a = adj.per_class[m];
      const std::set<std::uint32_t> support = as_set(sampled.groups[m]);
      for (std::size_t i = 0; i < n; ++i) {
        float row_sum = 0.0f;
        for (std::size_t j = 0; j < n; ++j) {
          if (!support.count(static_cast<std::uint32_t>(i)) ||
              !support.count(static_cast<std::uint32_t>(j))) {
            CHECK(a(i, j) == 0.0f);
          }
          row_sum += a(i, j);
        }
        if (support.count(static_cast<std::uint32_t>(i))) {
          CHECK(row_sum == doctest::Approx(1.0f).epsilon(1e-5));
        } else {
          CHECK(row_sum == 0.0f);
        }
      }
    }
  }
}

TEST_CASE("adjacency construction is equivariant to node relabeling") {
  Rng rng(271);
  const std::size_t n = 9, channels = 4;
  auto x = TensorD::uniform({channels, n}, -1.0, 1.0, rng);
  auto w = TensorD::uniform({channels, channels}, -0.8, 0.8, rng);
  auto wp = TensorD::uniform({channels, channels}, -0.8, 0.8, rng);
  const std::vector<std::uint32_t> support{1, 3, 4, 7, 8};

  auto base = cdgc::row_softmax(cdgc::similarity_scores(x, w, wp, support), support);

  // Apply a permutation to the node axis and to the support set.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
  }
  std::vector<double> shuffled(channels * n);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) shuffled[c * n + perm[i]] = x(c, i);
  }
  auto xp = TensorD::from({channels, n}, std::move(shuffled));
  std::vector<std::uint32_t> mapped;
  for (std::uint32_t s : support) mapped.push_back(static_cast<std::uint32_t>(perm[s]));
  std::sort(mapped.begin(), mapped.end());
  auto permuted = cdgc::row_softmax(cdgc::similarity_scores(xp, w, wp, mapped), mapped);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(permuted(perm[i], perm[j]) == doctest::Approx(base(i, j)).epsilon(1e-9));
    }
  }
}

TEST_CASE("empty classes produce all-zero adjacency slices") {
  Rng rng(12);
  auto x = TensorF::uniform({3, 5}, -1.0f, 1.0f, rng);
  auto w = TensorF::uniform({3, 3}, -1.0f, 1.0f, rng);
  auto wp = TensorF::uniform({3, 3}, -1.0f, 1.0f, rng);
  SampledSet sampled;
  sampled.num_nodes = 5;
  sampled.groups = {{0, 1, 2, 3, 4}, {}};
  const auto adj = cdgc::build_adjacency(x, w, wp, sampled);
  REQUIRE(adj.per_class.size() == 2);
  for (float v : adj.per_class[1].values()) CHECK(v == 0.0f);
  float diag = 0.0f;
  for (std::size_t j = 0; j < 5; ++j) diag += adj.per_class[0](0, j);
  CHECK(diag == doctest::Approx(1.0f).epsilon(1e-5));
}
