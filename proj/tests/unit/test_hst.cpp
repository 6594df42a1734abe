#include <doctest.h>

#include <cmath>

#include "emad/hst.hpp"
#include "fixtures.hpp"

using namespace emad;

TEST_CASE("analytic gradients match central differences") {
  const auto params = testing::hst_params({4, 2, 1, false}, 2, 11);
  const auto in = testing::hst_input(4, 3, 5);
  LossWeights w{0.7, 0.3, 1.5, 0.6};
  for (const int label : {0, 1}) {
    std::vector<Matrix> grads;
    address_loss(params, in, label, w, &grads);
    for (std::size_t t = 0; t < params.size(); ++t) {
      Matrix numeric = Matrix::Zero(params.tensor(t).rows(), params.tensor(t).cols());
      for (Eigen::Index k = 0; k < numeric.size(); ++k) {
        const double h = 1e-4;
        HstParams plus = params, minus = params;
        plus.tensor(t).data()[k] += h;
        minus.tensor(t).data()[k] -= h;
        numeric.data()[k] =
            (address_loss(plus, in, label, w).total - address_loss(minus, in, label, w).total) / (2 * h);
      }
      const double scale = std::max(grads[t].norm(), numeric.norm());
      INFO(params.name(t), " label ", label, " g ", grads[t].norm(), " n ", numeric.norm());
      if (scale < 1e-9) continue;
      CHECK((grads[t] - numeric).norm() / scale <= 1e-4);
    }
  }
}
