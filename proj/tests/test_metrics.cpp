#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "handseq/errors.hpp"
#include "handseq/hand_model.hpp"
#include "handseq/metrics.hpp"
#include "handseq/rng.hpp"
#include "test_support.hpp"

using namespace handseq;
using namespace handseq::testing;

namespace {

Points random_joints(Rng& rng, int joints, Scalar scale) {
  Points p(joints, 3);
  for (int j = 0; j < joints; ++j)
    for (int c = 0; c < 3; ++c) p(j, c) = rng.uniform(-scale, scale);
  return p;
}

Mat3 random_rotation(Rng& rng) {
  return rodrigues(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)));
}

// Mean distance after the best similarity found by a two-level rotation
// grid search with closed-form scale/translation per rotation. Minimizes
// the same squared objective as the analytic alignment.
Scalar grid_search_alignment_error(const Points& pred, const Points& gt) {
  const Vec3 mu_p = pred.colwise().mean().transpose();
  const Vec3 mu_g = gt.colwise().mean().transpose();
  Points cp = pred;
  cp.rowwise() -= mu_p.transpose();
  Points cg = gt;
  cg.rowwise() -= mu_g.transpose();
  const Scalar var = cp.rowwise().squaredNorm().mean();

  const auto objective = [&](const Mat3& rot, Scalar& mean_dist) {
    const Points rp = cp * rot.transpose();
    Scalar num = 0.0;
    for (int j = 0; j < rp.rows(); ++j) num += rp.row(j).dot(cg.row(j));
    const Scalar scale = num / (var * rp.rows());
    Scalar sq = 0.0, dist = 0.0;
    for (int j = 0; j < rp.rows(); ++j) {
      const Scalar d = (scale * rp.row(j) - cg.row(j)).norm();
      sq += d * d;
      dist += d;
    }
    mean_dist = dist / rp.rows();
    return sq;
  };

  Scalar best_sq = std::numeric_limits<Scalar>::infinity();
  Scalar best_dist = 0.0;
  Vec3 best_euler = Vec3::Zero();
  const auto sweep = [&](const Vec3& center, Scalar span, int steps) {
    for (int a = 0; a < steps; ++a)
      for (int b = 0; b < steps; ++b)
        for (int c = 0; c < steps; ++c) {
          const Vec3 euler =
              center + span * Vec3(2.0 * a / (steps - 1) - 1.0, 2.0 * b / (steps - 1) - 1.0,
                                   2.0 * c / (steps - 1) - 1.0);
          const Mat3 rot =
              (Eigen::AngleAxisd(euler.x(), Vec3::UnitX()) *
               Eigen::AngleAxisd(euler.y(), Vec3::UnitY()) *
               Eigen::AngleAxisd(euler.z(), Vec3::UnitZ()))
                  .toRotationMatrix();
          Scalar dist;
          const Scalar sq = objective(rot, dist);
          if (sq < best_sq) {
            best_sq = sq;
            best_dist = dist;
            best_euler = euler;
          }
        }
  };
  sweep(Vec3::Zero(), M_PI, 25);
  for (int level = 0; level < 4; ++level) {
    sweep(best_euler, M_PI / 12.0 / std::pow(4.0, level), 9);
  }
  return best_dist * kMetersToMillimeters;
}

}  // namespace

TEST_CASE("mpjpe") {
  Rng rng(1);
  const int joints = 21;

  SUBCASE("identical input is zero") {
    const Points p = random_joints(rng, joints, 0.1);
    CHECK(mpjpe({p}, {p}, 0) == 0.0);
  }

  SUBCASE("per-frame global offsets vanish under root alignment") {
    PointSeq pred, gt;
    for (int t = 0; t < 4; ++t) {
      const Points p = random_joints(rng, joints, 0.1);
      Points shifted = p;
      shifted.rowwise() += Eigen::RowVector3d(0.01 * t, -0.3, 0.2 * t);
      pred.push_back(shifted);
      gt.push_back(p);
    }
    CHECK(mpjpe(pred, gt, 0) < 1e-12);
  }

  SUBCASE("one displaced joint averages over the joint count") {
    const Points gt = random_joints(rng, joints, 0.1);
    Points pred = gt;
    pred(5, 1) += 0.010;  // 10 mm on a non-root joint
    CHECK(mpjpe({pred}, {gt}, 0) == doctest::Approx(10.0 / 21.0).epsilon(1e-12));
  }

  SUBCASE("shape mismatch is a contract error") {
    CHECK_THROWS_AS(mpjpe({random_joints(rng, 5, 1)}, {random_joints(rng, 6, 1)}, 0),
                    ContractError);
  }
}

TEST_CASE("pa_mpjpe") {
  Rng rng(2);

  SUBCASE("invariant under random similarity transforms") {
    for (int trial = 0; trial < 100; ++trial) {
      const Points gt = random_joints(rng, 21, 0.1);
      const Mat3 rot = random_rotation(rng);
      const Scalar scale = rng.uniform(0.5, 2.0);
      const Vec3 t(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      Points pred = scale * (gt * rot.transpose());
      pred.rowwise() += t.transpose();
      CHECK(pa_mpjpe({pred}, {gt}) < 1e-6);
    }
  }

  SUBCASE("never exceeds mpjpe") {
    for (int trial = 0; trial < 100; ++trial) {
      const Points gt = random_joints(rng, 21, 0.1);
      Points pred = gt;
      for (int j = 0; j < pred.rows(); ++j)
        for (int c = 0; c < 3; ++c) pred(j, c) += rng.uniform(-0.02, 0.02);
      CHECK(pa_mpjpe({pred}, {gt}) <= mpjpe({pred}, {gt}, 0) + 1e-9);
    }
  }

  SUBCASE("matches a rotation grid search on a 4-joint case") {
    Rng local(77);
    const Points gt = random_joints(local, 4, 0.1);
    Points pred = gt;
    for (int j = 0; j < 4; ++j)
      for (int c = 0; c < 3; ++c) pred(j, c) += local.uniform(-0.03, 0.03);
    const Scalar analytic = pa_mpjpe({pred}, {gt});
    const Scalar grid = grid_search_alignment_error(pred, gt);
    CHECK(analytic == doctest::Approx(grid).epsilon(5e-4));
    CHECK(analytic <= grid + 1e-9);  // grid evaluates the same objective family
  }

  SUBCASE("collinear joints raise a degeneracy error") {
    Points line(5, 3);
    for (int j = 0; j < 5; ++j) line.row(j) = Vec3(0.01 * j, 0, 0).transpose();
    CHECK_THROWS_AS(pa_mpjpe({line}, {line}), ValidationError);
  }
}

TEST_CASE("mpvpe") {
  Rng rng(3);
  const int verts = 778;

  SUBCASE("identical meshes are zero") {
    const Points v = random_joints(rng, verts, 0.1);
    Points roots(1, 3);
    roots.row(0) = Vec3(0.01, 0.02, 0.03).transpose();
    CHECK(mpvpe({v}, {v}, roots, roots) == 0.0);
  }

  SUBCASE("uniform offset removed by root alignment") {
    const Points v = random_joints(rng, verts, 0.1);
    Points shifted = v;
    shifted.rowwise() += Eigen::RowVector3d(0.005, 0, 0);
    Points roots_gt(1, 3), roots_pred(1, 3);
    roots_gt.row(0) = Vec3::Zero().transpose();
    roots_pred.row(0) = Vec3(0.005, 0, 0).transpose();
    CHECK(mpvpe({shifted}, {v}, roots_pred, roots_gt) < 1e-12);
  }

  SUBCASE("single vertex error averages over the vertex count") {
    const Points v = random_joints(rng, verts, 0.1);
    Points pred = v;
    pred(100, 2) += 0.003;  // 3 mm
    Points roots = Points::Zero(1, 3);
    CHECK(mpvpe({pred}, {v}, roots, roots) == doctest::Approx(3.0 / 778.0).epsilon(1e-9));
  }
}

TEST_CASE("pck_auc") {
  Rng rng(4);

  SUBCASE("perfect prediction saturates the curve") {
    const Points p = random_joints(rng, 21, 0.1);
    const auto [curve, auc] = pck_auc({p}, {p}, 0);
    CHECK(curve.size() == 51);
    for (const PckPoint& pt : curve) CHECK(pt.fraction == 1.0);
    CHECK(auc == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("errors beyond the range zero the curve") {
    Points gt = Points::Zero(4, 3);
    gt.row(0) = Vec3(0.05, 0.06, -0.04).transpose();  // non-degenerate root
    Points pred = gt;
    for (int j = 1; j < 4; ++j) pred(j, 0) += 0.1;  // 100 mm, root untouched
    const auto [curve, auc] = pck_auc({pred}, {gt}, 0);
    for (const PckPoint& pt : curve) {
      CHECK(pt.fraction == doctest::Approx(0.25).epsilon(1e-12));  // only the root is exact
    }
    CHECK(auc == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("two-error case matches a hand-computed trapezoid sum") {
    Points gt = Points::Zero(3, 3);
    gt.row(1) = Vec3(0.1, 0, 0).transpose();
    gt.row(2) = Vec3(0, 0.1, 0).transpose();
    Points pred = gt;
    pred(1, 1) += 0.010;  // 10 mm
    pred(2, 1) += 0.030;  // 30 mm
    const auto [curve, auc] = pck_auc({pred}, {gt}, 0);

    Scalar expected_auc = 0.0;
    std::vector<Scalar> fractions;
    for (int i = 0; i <= 50; ++i) {
      const Scalar tau = static_cast<Scalar>(i);
      int hits = 0;
      for (const Scalar err : {0.0, 10.0, 30.0}) {
        if (err <= tau) ++hits;
      }
      fractions.push_back(hits / 3.0);
      CHECK(curve[static_cast<size_t>(i)].fraction ==
            doctest::Approx(hits / 3.0).epsilon(1e-12));
    }
    for (int i = 0; i < 50; ++i) {
      expected_auc += 0.5 * (fractions[static_cast<size_t>(i)] +
                             fractions[static_cast<size_t>(i) + 1]);
    }
    expected_auc /= 50.0;
    CHECK(auc == doctest::Approx(expected_auc).epsilon(1e-12));
  }

  SUBCASE("monotone curve and bounded area on random input") {
    const PointSeq pred{random_joints(rng, 21, 0.1)};
    const PointSeq gt{random_joints(rng, 21, 0.1)};
    const auto [curve, auc] = pck_auc(pred, gt, 0);
    for (size_t i = 1; i < curve.size(); ++i) {
      CHECK(curve[i].fraction >= curve[i - 1].fraction);
      CHECK(curve[i].fraction >= 0.0);
      CHECK(curve[i].fraction <= 1.0);
    }
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
  }
}

TEST_CASE("accel_error") {
  Rng rng(5);
  const int joints = 6;

  SUBCASE("identical sequences are zero") {
    PointSeq seq;
    for (int t = 0; t < 5; ++t) seq.push_back(random_joints(rng, joints, 0.1));
    CHECK(accel_error(seq, seq, 30.0) == 0.0);
  }

  SUBCASE("constant velocity has no acceleration") {
    const Points base = random_joints(rng, joints, 0.1);
    const Points vel = random_joints(rng, joints, 0.01);
    PointSeq pred, gt;
    for (int t = 0; t < 6; ++t) {
      pred.push_back(base + t * vel);
      gt.push_back(base + t * (0.5 * vel));  // different velocity, still linear
    }
    CHECK(accel_error(pred, gt, 30.0) < 1e-9);
  }

  SUBCASE("quadratic trajectory against a static prediction") {
    // One joint follows x = t^2 meters at 1 fps; its second difference is
    // exactly 2 m/s^2, all other joints match.
    PointSeq pred, gt;
    for (int t = 0; t < 5; ++t) {
      Points p = Points::Zero(joints, 3);
      pred.push_back(p);
      p(2, 0) = static_cast<Scalar>(t) * static_cast<Scalar>(t);
      gt.push_back(p);
    }
    Scalar oracle = 0.0;
    for (int t = 1; t < 4; ++t) {
      Scalar frame_mean = 0.0;
      for (int j = 0; j < joints; ++j) {
        const Vec3 ap = Vec3::Zero();
        const Vec3 ag = (gt[t + 1].row(j) - 2.0 * gt[t].row(j) + gt[t - 1].row(j)).transpose();
        frame_mean += (ap - ag).norm() / joints;
      }
      oracle += frame_mean * 1000.0 / 3.0;
    }
    CHECK(accel_error(pred, gt, 1.0) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(accel_error(pred, gt, 1.0) ==
          doctest::Approx(2000.0 / joints).epsilon(1e-12));
  }

  SUBCASE("scales with fps squared") {
    PointSeq pred, gt;
    for (int t = 0; t < 7; ++t) {
      pred.push_back(random_joints(rng, joints, 0.1));
      gt.push_back(random_joints(rng, joints, 0.1));
    }
    const Scalar base = accel_error(pred, gt, 30.0);
    const Scalar scaled = accel_error(pred, gt, 90.0);
    CHECK(std::abs(scaled - 9.0 * base) / scaled < 1e-9);
  }

  SUBCASE("needs three frames") {
    PointSeq two(2, Points::Zero(3, 3));
    CHECK_THROWS_AS(accel_error(two, two, 30.0), ContractError);
  }
}

TEST_CASE("mmpd") {
  Points av, bv, far_v;
  Faces af, bf, far_f;
  subdivided_box_mesh(Vec3::Zero(), Vec3(0.5, 0.5, 0.5), av, af);
  subdivided_box_mesh(Vec3(0.5, 0, 0), Vec3(0.5, 0.5, 0.5), bv, bf);
  box_mesh(Vec3(5, 0, 0), Vec3(0.5, 0.5, 0.5), far_v, far_f);
  const TriMesh overlap_right = build_mesh(av, af);
  const TriMesh overlap_left = build_mesh(bv, bf);
  const TriMesh far_box = build_mesh(far_v, far_f);

  SUBCASE("all disjoint frames give zero") {
    std::vector<std::pair<TriMesh, TriMesh>> pairs(4, {overlap_right, far_box});
    CHECK(mmpd(pairs) == 0.0);
  }

  SUBCASE("one colliding frame among ten averages its depth") {
    std::vector<std::pair<TriMesh, TriMesh>> pairs(9, {overlap_right, far_box});
    pairs.push_back({overlap_right, overlap_left});  // analytic depth 0.5 m
    CHECK(mmpd(pairs) == doctest::Approx(50.0).epsilon(1e-9));
  }

  SUBCASE("equals the mean of per-frame report depths") {
    std::vector<std::pair<TriMesh, TriMesh>> pairs{{overlap_right, overlap_left},
                                                   {overlap_right, far_box}};
    const Scalar expected = 0.5 * (penetration_report(overlap_right, overlap_left).max_depth +
                                   penetration_report(overlap_right, far_box).max_depth) *
                            1000.0;
    CHECK(mmpd(pairs) == doctest::Approx(expected).epsilon(1e-15));
  }
}
