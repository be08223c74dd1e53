#include "doctest.h"
#include "issrnn/gradcheck.hpp"

using namespace issrnn;

TEST_CASE("linear loss is exact under central differences") {
  std::vector<double> params{0.3, -1.2, 2.5, 0.0};
  auto loss = [&] {
    double s = 0;
    for (double v : params) s += v;
    return s;
  };
  std::vector<double> analytic(params.size(), 1.0);
  const double err = fd_max_rel_error(params, loss, analytic, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("epsilon outside the supported window throws") {
  std::vector<double> params{1.0};
  auto loss = [&] { return params[0]; };
  std::vector<double> analytic{1.0};
  CHECK_THROWS_AS(fd_max_rel_error(params, loss, analytic, 1e-7), ParameterError);
  CHECK_THROWS_AS(fd_max_rel_error(params, loss, analytic, 1e-3), ParameterError);
}

TEST_CASE("toy LSTM gradients pass the finite-difference gate") {
  auto rep = fd_check_random_lstm(9, 4, {3}, 5, 2, 1234, 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
  CHECK(rep.params_checked > 0);
}

TEST_CASE("two-layer LSTM gradients pass") {
  auto rep = fd_check_random_lstm(7, 3, {4, 3}, 4, 2, 777, 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("toy RHN gradients pass, both gate variants") {
  auto coupled = fd_check_random_rhn(8, 4, 4, 3, true, false, 4, 2, 99, 1e-5);
  CHECK(coupled.max_rel_error < 1e-4);
  auto indep = fd_check_random_rhn(8, 4, 4, 3, false, false, 4, 2, 98, 1e-5);
  CHECK(indep.max_rel_error < 1e-4);
  auto tied = fd_check_random_rhn(8, 4, 4, 2, true, true, 4, 2, 97, 1e-5);
  CHECK(tied.max_rel_error < 1e-4);
}
