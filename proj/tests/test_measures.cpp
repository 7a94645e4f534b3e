#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ot/measures.hpp"

#include <cstdio>
#include <fstream>
#include <string>

using namespace ot;

namespace {
Vector vec(std::initializer_list<double> v) {
  Vector x(Index(v.size()));
  Index i = 0;
  for (double t : v) x[i++] = t;
  return x;
}
}  // namespace

TEST_CASE("uniform box sampling basics") {
  auto spec = DistributionSpec::uniform_box(vec({0, 0}), vec({1, 1}));
  auto m = sample(spec, 4, 7);
  CHECK(m.size() == 4);
  CHECK(m.dim() == 2);
  for (Index i = 0; i < 4; ++i) {
    CHECK(m.weights[i] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(m.points(i, 0) >= 0.0);
    CHECK(m.points(i, 0) <= 1.0);
    CHECK(m.points(i, 1) >= 0.0);
    CHECK(m.points(i, 1) <= 1.0);
  }
}

TEST_CASE("finite-atoms empirical fraction near the weight") {
  // Binomial(1000, 1/2) puts ~99.8% of its mass on [450, 550], so the
  // realized fraction of atom 0 lands in [0.45, 0.55] for this fixed seed.
  Matrix atoms(2, 1);
  atoms << 0, 1;
  auto spec = DistributionSpec::finite_atoms(atoms, vec({0.5, 0.5}));
  auto m = sample(spec, 1000, 1);
  Index count0 = 0;
  for (Index i = 0; i < m.size(); ++i)
    if (m.points(i, 0) == 0.0) ++count0;
  const double frac = double(count0) / 1000.0;
  CHECK(frac >= 0.45);
  CHECK(frac <= 0.55);
}

TEST_CASE("sampling determinism is bit-for-bit") {
  auto spec = DistributionSpec::uniform_two_boxes(vec({-1}), vec({-0.2}), vec({0.3}), vec({1}));
  auto a = sample(spec, 257, 99, 5);
  auto b = sample(spec, 257, 99, 5);
  CHECK((a.points.array() == b.points.array()).all());
  CHECK((a.weights.array() == b.weights.array()).all());
  auto c = sample(spec, 257, 99, 6);
  CHECK(!(a.points.array() == c.points.array()).all());
}

TEST_CASE("support radius") {
  PointCloudMeasure m1{Matrix::Zero(1, 3), vec({1.0})};
  CHECK(support_radius(m1) == 0.0);

  Matrix p2(2, 2);
  p2 << 3, 4, 0, 1;
  PointCloudMeasure m2{p2, vec({0.5, 0.5})};
  CHECK(support_radius(m2) == doctest::Approx(5.0).epsilon(1e-15));

  Matrix p3(2, 1);
  p3 << -2, 1.5;
  PointCloudMeasure m3{p3, vec({0.5, 0.5})};
  CHECK(support_radius(m3) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("all kinds stay in the declared support over many draws") {
  const Index n = 10000;

  auto box = DistributionSpec::uniform_box(vec({-1, 2}), vec({0.5, 3}));
  auto mb = sample(box, n, 12);
  CHECK(support_radius(mb) <= box.support_radius() + 1e-12);

  auto two = DistributionSpec::uniform_two_boxes(vec({-2}), vec({-1}), vec({1}), vec({3}), 0.3);
  auto mt = sample(two, n, 13);
  for (Index i = 0; i < n; ++i) {
    const double x = mt.points(i, 0);
    const bool in1 = x >= -2.0 && x <= -1.0;
    const bool in2 = x >= 1.0 && x <= 3.0;
    CHECK((in1 || in2));
  }
  CHECK(support_radius(mt) <= two.support_radius() + 1e-12);

  auto ann = DistributionSpec::uniform_annulus(vec({1, -1}), 0.5, 2.0);
  auto ma = sample(ann, n, 14);
  for (Index i = 0; i < n; ++i) {
    const double r = (ma.points.row(i).transpose() - ann.center).norm();
    CHECK(r >= 0.5 - 1e-12);
    CHECK(r <= 2.0 + 1e-12);
  }
  CHECK(support_radius(ma) <= ann.support_radius() + 1e-12);

  Matrix atoms(3, 2);
  atoms << 0, 0, 1, 0, 0, -2;
  auto fin = DistributionSpec::finite_atoms(atoms, vec({0.2, 0.3, 0.5}));
  auto mf = sample(fin, n, 15);
  CHECK(support_radius(mf) <= fin.support_radius() + 1e-12);

  auto prod = DistributionSpec::product_1d({{Interval{-1, -0.5}, Interval{0.5, 1}},
                                            {Interval{0, 0.25}}});
  auto mp = sample(prod, n, 16);
  for (Index i = 0; i < n; ++i) {
    const double x = mp.points(i, 0), y = mp.points(i, 1);
    CHECK(((x >= -1 && x <= -0.5) || (x >= 0.5 && x <= 1)));
    CHECK(y >= 0.0);
    CHECK(y <= 0.25);
  }
}

TEST_CASE("empirical mean of uniform box approaches the center") {
  const Index n = 10000;
  auto spec = DistributionSpec::uniform_box(vec({-1, 0}), vec({1, 4}));
  auto m = sample(spec, n, 21);
  Vector mean = (m.points.transpose() * m.weights);
  Vector center = vec({0, 2});
  const double side = 4.0;  // largest side
  CHECK((mean - center).norm() <= 4.0 * side / std::sqrt(double(n)));
}

TEST_CASE("density bounds and radii") {
  auto box = DistributionSpec::uniform_box(vec({0, 0}), vec({2, 0.5}));
  CHECK(box.density_bound() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(box.support_radius() == doctest::Approx(std::sqrt(4.0 + 0.25)));

  auto ann = DistributionSpec::uniform_annulus(vec({0, 0}), 1.0, 2.0);
  CHECK(ann.density_bound() == doctest::Approx(1.0 / (3.0 * M_PI)));

  Matrix atoms(1, 1);
  atoms << 3;
  auto fin = DistributionSpec::finite_atoms(atoms, vec({1.0}));
  CHECK_THROWS_AS(fin.density_bound(), std::invalid_argument);
}

TEST_CASE("construction rules: dedup, zero weights, tiny weights") {
  Matrix p(3, 1);
  p << 1, 1, 2;
  auto m = make_measure(p, vec({0.25, 0.25, 0.5}));
  CHECK(m.size() == 2);  // exact duplicates merged
  // the merged atom carries the summed weight
  for (Index i = 0; i < m.size(); ++i) {
    if (m.points(i, 0) == 1.0) CHECK(m.weights[i] == doctest::Approx(0.5));
  }

  Matrix q(2, 1);
  q << 0, 5;
  auto z = make_measure(q, vec({1.0, 0.0}));
  CHECK(z.size() == 1);  // zero-weight atom dropped

  CHECK_THROWS_AS(make_measure(q, vec({1.0 - 1e-16, 1e-16})), std::invalid_argument);
  CHECK_THROWS_WITH_AS(make_measure(q, vec({0.5, 0.6})),
                       doctest::Contains("weights sum"), std::invalid_argument);
}

TEST_CASE("csv and json round trips are lossless") {
  Matrix p(3, 2);
  p << 0.1234567890123456, -1.0 / 3.0, M_PI, -2e-7, 1e3, 0.5;
  auto m = make_measure(p, vec({0.25, 0.35, 0.40}));

  const std::string csv = "/tmp/ot_measure_test.csv";
  write_measure(m, csv, FileFormat::Csv);
  auto mc = read_measure(csv, FileFormat::Csv);
  CHECK(mc.size() == m.size());
  CHECK((mc.points - m.points).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((mc.weights - m.weights).cwiseAbs().maxCoeff() <= 1e-15);

  const std::string js = "/tmp/ot_measure_test.json";
  write_measure(m, js, FileFormat::Json);
  auto mj = read_measure(js, FileFormat::Json);
  CHECK((mj.points - m.points).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((mj.weights - m.weights).cwiseAbs().maxCoeff() <= 1e-15);

  std::remove(csv.c_str());
  std::remove(js.c_str());
}

TEST_CASE("malformed csv files are rejected with line numbers") {
  const std::string path = "/tmp/ot_measure_bad.csv";
  {
    std::ofstream out(path);
    out << "w,x1,x2\n0.5,0,0\n0.5,1\n";  // second row lacks a column
  }
  CHECK_THROWS_WITH_AS(read_measure(path, FileFormat::Csv),
                       doctest::Contains("dimension mismatch"), std::invalid_argument);
  {
    std::ofstream out(path);
    out << "w,x1\n0.5,0\n0.6,1\n";  // weights sum to 1.1
  }
  CHECK_THROWS_WITH_AS(read_measure(path, FileFormat::Csv),
                       doctest::Contains("weights sum"), std::invalid_argument);
  {
    std::ofstream out(path);
    out << "w,x1\n0.5,zero\n0.5,1\n";  // unparsable number
  }
  CHECK_THROWS_WITH_AS(read_measure(path, FileFormat::Csv),
                       doctest::Contains("malformed"), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(DistributionSpec::uniform_box(vec({0}), vec({0})), std::invalid_argument);
  CHECK_THROWS_AS(DistributionSpec::uniform_annulus(vec({0, 0}), 2.0, 1.0),
                  std::invalid_argument);
  Matrix atoms(0, 1);
  CHECK_THROWS_AS(DistributionSpec::finite_atoms(atoms, Vector()), std::invalid_argument);
  auto box = DistributionSpec::uniform_box(vec({0}), vec({1}));
  CHECK_THROWS_AS(sample(box, 0, 1), std::invalid_argument);
}
