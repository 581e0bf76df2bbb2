#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fd_check.hpp"
#include "gpm/errors.hpp"
#include "gpm/loss.hpp"
#include "gpm/ops.hpp"

using gpm::DataError;
using gpm::PredictionBundle;
using gpm::Tensor;

namespace {

// Independent scalar-loop evaluation of the combined loss, double precision.
double loss_oracle(const std::vector<double>& y_s,
                   const std::vector<double>& y_s_star,
                   const std::vector<std::vector<double>>& y_d,
                   const std::vector<std::vector<double>>& y_d_star,
                   double k_o, double k_i) {
  double l_s = 0.0;
  for (size_t c = 0; c < y_s.size(); ++c) {
    l_s += std::fabs(y_s_star[c] - y_s[c]);
  }
  l_s /= double(y_s.size());
  double l_d = 0.0;
  for (size_t i = 0; i < y_d.size(); ++i) {
    double term = 0.0;
    for (size_t c = 0; c < y_d[i].size(); ++c) {
      const double diff = y_d_star[i][c] - y_d[i][c];
      term += (1.0 + k_i * y_d_star[i][c]) * diff * diff;
    }
    l_d += term / double(y_d[i].size());
  }
  l_d /= double(y_d.size());
  return l_s + k_o * l_d;
}

std::vector<double> widen(const Tensor& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

Tensor random_raster(int h, int w, std::mt19937_64& rng, bool grad = false) {
  return Tensor::uniform({h, w}, 0.0f, 1.0f, rng, grad);
}

}  // namespace

TEST_CASE("static loss: zero at equality, hand value, offset linearity") {
  Tensor a = Tensor::from_data({2, 2}, {1.0f, 1.0f, 0.0f, 0.0f});
  CHECK(gpm::static_loss(a, a).scalar() == 0.0f);

  Tensor y = Tensor::from_data({2, 2}, {0.5f, 1.0f, 0.0f, 0.5f});
  CHECK(gpm::static_loss(y, a).scalar() == doctest::Approx(0.25).epsilon(1e-7));

  Tensor base = Tensor::from_data({2, 2}, {0.1f, 0.4f, 0.2f, 0.6f});
  Tensor offset = gpm::add(base, Tensor::full({2, 2}, 0.25f));
  CHECK(gpm::static_loss(offset, base).scalar() ==
        doctest::Approx(0.25).epsilon(1e-7));

  Tensor wrong = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(gpm::static_loss(a, wrong), DataError);
}

TEST_CASE("cell weight: unit for background, k+1 for dynamic") {
  CHECK(gpm::cell_weight(0.0f, 40.0f) == 1.0f);
  CHECK(gpm::cell_weight(1.0f, 40.0f) == 41.0f);
  CHECK(gpm::cell_weight(0.5f, 40.0f) == 21.0f);
  CHECK(gpm::cell_weight(0.7f, 0.0f) == 1.0f);
}

TEST_CASE("dynamic loss: perfect, single dynamic cell, uniform background") {
  Tensor star = Tensor::from_data({1, 1}, {1.0f});
  CHECK(gpm::dynamic_loss({star}, {star}, 40.0f).scalar() == 0.0f);

  Tensor pred = Tensor::from_data({1, 1}, {0.0f});
  CHECK(gpm::dynamic_loss({pred}, {star}, 40.0f).scalar() ==
        doctest::Approx(41.0).epsilon(1e-7));

  Tensor bg_star = Tensor::zeros({4, 4});
  Tensor bg_pred = Tensor::full({4, 4}, 0.1f);
  std::vector<float> terms;
  float v = gpm::dynamic_loss({bg_pred, bg_pred}, {bg_star, bg_star}, 40.0f,
                              &terms)
                .scalar();
  CHECK(v == doctest::Approx(0.01).epsilon(1e-6));
  REQUIRE(terms.size() == 2);
  CHECK(terms[0] == doctest::Approx(0.01).epsilon(1e-6));

  CHECK_THROWS_AS(gpm::dynamic_loss({pred, pred}, {star}, 40.0f), DataError);
  CHECK_THROWS_AS(gpm::dynamic_loss({}, {}, 40.0f), DataError);
}

TEST_CASE("dynamic loss: gradient ratio between dynamic and static cells") {
  // Equal residual magnitude 0.2; the dynamic cell's gradient must be k_i+1
  // times the static cell's.
  Tensor y_dyn = Tensor::from_data({1, 1}, {0.8f}, true);
  Tensor star_dyn = Tensor::from_data({1, 1}, {1.0f});
  gpm::backward(gpm::dynamic_loss({y_dyn}, {star_dyn}, 40.0f));

  Tensor y_bg = Tensor::from_data({1, 1}, {0.2f}, true);
  Tensor star_bg = Tensor::from_data({1, 1}, {0.0f});
  gpm::backward(gpm::dynamic_loss({y_bg}, {star_bg}, 40.0f));

  CHECK(std::fabs(y_dyn.grad()[0] / y_bg.grad()[0]) ==
        doctest::Approx(41.0).epsilon(1e-5));
}

TEST_CASE("overall loss: composition, report invariant, oracle agreement") {
  std::mt19937_64 rng(5);
  const int n_pred = 3;
  PredictionBundle bundle;
  bundle.y_stat = random_raster(5, 4, rng);
  Tensor y_s_star = random_raster(5, 4, rng);
  std::vector<Tensor> y_d_star;
  for (int i = 0; i < n_pred; ++i) {
    bundle.y_dyn.push_back(random_raster(5, 4, rng));
    y_d_star.push_back(random_raster(5, 4, rng));
  }

  const float k_o = 0.7f, k_i = 40.0f;
  auto res = gpm::overall_loss(bundle, y_s_star, y_d_star, k_o, k_i);

  CHECK(res.report.l_o ==
        doctest::Approx(res.report.l_s + k_o * res.report.l_d).epsilon(1e-6));
  CHECK(res.report.l_s >= 0.0f);
  CHECK(res.report.l_d >= 0.0f);
  CHECK(res.report.l_o >= 0.0f);
  REQUIRE(res.report.horizon_terms.size() == n_pred);
  float mean_terms = 0.0f;
  for (float t : res.report.horizon_terms) {
    CHECK(t >= 0.0f);
    mean_terms += t / float(n_pred);
  }
  CHECK(mean_terms == doctest::Approx(res.report.l_d).epsilon(1e-6));

  std::vector<std::vector<double>> dyn, dyn_star;
  for (int i = 0; i < n_pred; ++i) {
    dyn.push_back(widen(bundle.y_dyn[i]));
    dyn_star.push_back(widen(y_d_star[i]));
  }
  double expect = loss_oracle(widen(bundle.y_stat), widen(y_s_star), dyn,
                              dyn_star, k_o, k_i);
  CHECK(res.total.scalar() == doctest::Approx(expect).epsilon(1e-6));

  // Perfect prediction zeroes everything.
  PredictionBundle perfect;
  perfect.y_stat = y_s_star;
  perfect.y_dyn = y_d_star;
  auto zero = gpm::overall_loss(perfect, y_s_star, y_d_star, k_o, k_i);
  CHECK(zero.report.l_o == 0.0f);

  // k_o = 0 reduces to the static term.
  auto stat_only = gpm::overall_loss(bundle, y_s_star, y_d_star, 0.0f, k_i);
  CHECK(stat_only.report.l_o == stat_only.report.l_s);
}

TEST_CASE("overall loss: gradients match finite differences of the oracle") {
  std::mt19937_64 rng(9);
  const int n_pred = 2;
  PredictionBundle bundle;
  bundle.y_stat = random_raster(3, 3, rng, true);
  Tensor y_s_star = random_raster(3, 3, rng);
  std::vector<Tensor> y_d_star;
  for (int i = 0; i < n_pred; ++i) {
    bundle.y_dyn.push_back(random_raster(3, 3, rng, true));
    y_d_star.push_back(random_raster(3, 3, rng));
  }
  const float k_o = 1.3f, k_i = 40.0f;
  auto res = gpm::overall_loss(bundle, y_s_star, y_d_star, k_o, k_i);
  gpm::backward(res.total);

  std::vector<Tensor> checked{bundle.y_stat, bundle.y_dyn[0], bundle.y_dyn[1]};
  std::vector<std::vector<double>> star_d{widen(y_d_star[0]),
                                          widen(y_d_star[1])};
  std::vector<double> star_s = widen(y_s_star);
  auto ref = [&](const std::vector<std::vector<double>>& v) {
    return loss_oracle(v[0], star_s, {v[1], v[2]}, star_d, k_o, k_i);
  };
  auto r = fd::check(checked, ref, 1e-4);
  CHECK(r.checked >= 25);  // abs() kinks may drop a coordinate or two
  CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("loss report: csv row format") {
  gpm::LossReport rep;
  rep.l_o = 7.0f;
  rep.l_s = 3.0f;
  rep.l_d = 2.0f;
  rep.horizon_terms = {2.0f, 2.5f};
  CHECK(rep.csv_row(12) == "12,7,3,2,2,2.5");
  CHECK(gpm::loss_csv_header(2) == "iter,loss,static,dynamic,horizon1,horizon2");
}
