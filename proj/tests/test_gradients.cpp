#include <doctest.h>

#include "gradcheck.hpp"
#include "tandem/blocks.hpp"
#include "tandem/network.hpp"

using namespace tandem;

TEST_CASE("every op passes central finite-difference checks") {
  auto result = gradcheck::run_all(20240317, 6);
  CAPTURE(result.max_rel_error);
  CHECK(result.checks >= 6 * 7);
  CHECK(result.max_rel_error < 1e-3);
}

TEST_CASE("block-level gradients reach every parameter slot") {
  Rng seeds(91);
  for (BlockKind kind : kAllBlockKinds) {
    for (std::size_t stride : {1u, 2u}) {
      BlockSpec spec;
      spec.kind = kind;
      spec.layers = block_layers(kind);
      spec.width_in = 3;
      spec.width_out = stride == 2 ? 6 : 3;
      spec.stride = stride;
      spec.dropout_rate = 0.0;
      auto block = build_block<double>("block1", spec);

      std::vector<ParameterT<double>*> params;
      block->collect_parameters(params);
      Rng rng(seeds.next_u64());
      for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
          p->value[i] = 0.5 * rng.next_gaussian();
        }
      }

      TensorT<double> input({2, 3, 6, 6});
      for (std::size_t i = 0; i < input.size(); ++i) {
        input[i] = rng.next_gaussian();
      }
      Rng unused(0);
      auto out = block->forward(input, Mode::kTrain, unused);
      TensorT<double> upstream(out.shape());
      for (std::size_t i = 0; i < upstream.size(); ++i) {
        upstream[i] = rng.next_gaussian();
      }
      block->backward(upstream);

      for (auto* p : params) {
        bool any_nonzero = false;
        for (std::size_t i = 0; i < p->grad.size(); ++i) {
          if (p->grad[i] != 0.0) any_nonzero = true;
        }
        CAPTURE(p->name);
        CHECK(any_nonzero);
      }
    }
  }
}

TEST_CASE("block forward/backward agrees with finite differences through all "
          "parameters") {
  // One compact end-to-end case per kind, in double.
  for (BlockKind kind : kAllBlockKinds) {
    BlockSpec spec;
    spec.kind = kind;
    spec.layers = block_layers(kind);
    spec.width_in = 2;
    spec.width_out = 2;
    spec.stride = 1;
    spec.dropout_rate = 0.0;
    auto block = build_block<double>("b", spec);

    Rng rng(1234 + static_cast<std::uint64_t>(kind));
    std::vector<ParameterT<double>*> params;
    block->collect_parameters(params);
    for (auto* p : params) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->value[i] = 0.4 * rng.next_gaussian();
      }
    }
    TensorT<double> input({1, 2, 4, 4});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.next_gaussian();

    Rng unused(0);
    auto out = block->forward(input, Mode::kEval, unused);
    TensorT<double> proj(out.shape());
    for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = rng.next_gaussian();
    block->backward(proj);

    for (auto* p : params) {
      auto fd = oracle::central_differences(
          [&](const std::vector<double>& x) {
            TensorT<double> saved = p->value;
            p->value = TensorT<double>(p->value.shape(), x);
            Rng quiet(0);
            auto y = block->forward(input, Mode::kEval, quiet);
            p->value = saved;
            return gradcheck::weighted_sum(y, proj);
          },
          gradcheck::flatten(p->value));
      const double err =
          oracle::max_relative_error(gradcheck::flatten(p->grad), fd);
      CAPTURE(p->name);
      CHECK(err < 1e-3);
    }
  }
}
