#include <cmath>

#include "doctest.h"
#include "qformer/attention_oracle.hpp"
#include "qformer/linalg.hpp"
#include "qformer/reference.hpp"
#include "test_support.hpp"

using namespace qf;
using namespace qf::test;

namespace {

MatD random_orthogonal(Rng& rng, int dim) {
  MatD g(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) g(r, c) = rng.normal();
  Eigen::HouseholderQR<MatD> qr(g);
  return qr.householderQ();
}

MatD random_matrix(Rng& rng, int rows, int cols) {
  MatD m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

double score_scale(const MatD& x, const MatD& u_k, const MatD& u_q, int p) {
  const MatD k = u_k.leftCols(p).transpose() * x;
  const MatD q = u_q.leftCols(p).transpose() * x;
  const double peak =
      std::max(k.colwise().squaredNorm().maxCoeff(),
               q.colwise().squaredNorm().maxCoeff());
  return power_of_two_at_least(peak);
}

// Weight of the test-qubit-zero half of a branch column; the test qubit is
// the most significant work bit.
double zero_test_weight(const VecC& column) {
  double w = 0.0;
  for (Eigen::Index i = 0; i < column.size() / 2; ++i)
    w += std::norm(column[i]);
  return w;
}

MatC hadamards(int qubits) {
  MatC out = MatC::Identity(1, 1);
  for (int q = 0; q < qubits; ++q) out = kron(hadamard(), out);
  return out;
}

}  // namespace

TEST_CASE("scaled embedding states keep unit norm and the exact overlap law") {
  Rng rng(101);
  for (int round = 0; round < 8; ++round) {
    VecD k(4), q(4);
    for (int i = 0; i < 4; ++i) {
      k[i] = rng.normal();
      q[i] = rng.normal();
    }
    const double lambda =
        power_of_two_at_least(std::max(k.squaredNorm(), q.squaredNorm()));
    const VecD kappa = scaled_key_state(k, lambda, 8);
    const VecD chi = scaled_query_state(q, lambda, 8);
    CHECK(kappa.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(chi.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(kappa.dot(chi) ==
          doctest::Approx(k.dot(q) / lambda).epsilon(1e-13));
    // The padding slots are disjoint: slot p for keys, p + 1 for queries.
    CHECK(kappa[5] == 0.0);
    CHECK(chi[4] == 0.0);
  }
  VecD k(4);
  k << 2.0, 0.0, 0.0, 0.0;
  CHECK_THROWS_AS(scaled_key_state(k, 2.0, 8), NumericError);
  CHECK_THROWS_AS(scaled_key_state(k, 8.0, 4), ShapeError);
  // A zero vector still embeds: all weight moves to the padding slot.
  const VecD flat = scaled_key_state(VecD::Zero(4), 4.0, 8);
  CHECK(flat[4] == 1.0);
  CHECK(flat.norm() == doctest::Approx(1.0));
}

TEST_CASE("overlap angles and score words follow the fixed-point grid") {
  const OverlapAngle a = OverlapAngle::from_overlap(0.37, 5);
  CHECK(a.theta == doctest::Approx(theta_from_overlap(0.37)));
  CHECK(a.codeword == codeword_from_theta(a.theta, 5));
  const OverlapAngle b = OverlapAngle::from_theta(kPi / 4.0, 5);
  CHECK(b.overlap == doctest::Approx(0.0));
  CHECK(b.codeword == 8);
  const OverlapAngle clipped = OverlapAngle::from_overlap(1.5, 5);
  CHECK(clipped.overlap == 1.0);
  CHECK(clipped.theta == doctest::Approx(kPi / 2.0));

  const AttentionScoreWord w = AttentionScoreWord::from_score(0.3, 2.0, 6);
  CHECK(w.word == quantize_value(0.15, 6));
  CHECK(w.value() == dequantize_value(w.word, 6));
  CHECK(w.score() == doctest::Approx(w.value() * 2.0));
}

TEST_CASE("hadamard test branches weigh the zero outcome by the overlap") {
  Rng rng(102);
  const MatD x = random_matrix(rng, 4, 4);
  const MatD u_k = random_orthogonal(rng, 4);
  const MatD u_q = random_orthogonal(rng, 4);
  const int p = 2;
  const double lambda = score_scale(x, u_k, u_q, p);
  const ParallelTest test =
      build_parallel_test(x, u_k, u_q, p, lambda, TestVariant::kHadamard);
  CHECK(test.data_qubits == 2);
  CHECK(test.work_qubits == 3);

  const MatD ref = ref_scores(x, u_q, u_k, p);
  for (int key = 0; key < 4; ++key)
    for (int query = 0; query < 4; ++query) {
      const double ov = test.branch_overlap(key, query);
      CHECK(ov * lambda ==
            doctest::Approx(ref(key, query)).epsilon(1e-12));
      const MatC& block = test.branch_block(key, query);
      CHECK(is_unitary(block, 1e-10));
      CHECK(zero_test_weight(block.col(0)) ==
            doctest::Approx(0.5 * (1.0 + ov)).epsilon(1e-12));
    }
}

TEST_CASE("swap test branches weigh the zero outcome by the squared overlap") {
  Rng rng(103);
  const MatD x = random_matrix(rng, 2, 2);
  const MatD u_k = random_orthogonal(rng, 2);
  const MatD u_q = random_orthogonal(rng, 2);
  const double lambda = score_scale(x, u_k, u_q, 1);
  const ParallelTest test =
      build_parallel_test(x, u_k, u_q, 1, lambda, TestVariant::kSwap);
  CHECK(test.data_qubits == 2);
  CHECK(test.work_qubits == 5);
  for (int key = 0; key < 2; ++key)
    for (int query = 0; query < 2; ++query) {
      const double ov = test.branch_overlap(key, query);
      const MatC& block = test.branch_block(key, query);
      CHECK(is_unitary(block, 1e-10));
      CHECK(zero_test_weight(block.col(0)) ==
            doctest::Approx(0.5 * (1.0 + ov * ov)).epsilon(1e-12));
    }
}

TEST_CASE("parallel test step equals its dense matrix on a random state") {
  Rng rng(104);
  const MatD x = random_matrix(rng, 4, 4);
  const MatD u = random_orthogonal(rng, 4);
  const double lambda = score_scale(x, u, u, 2);
  const ParallelTest test =
      build_parallel_test(x, u, u, 2, lambda, TestVariant::kHadamard);
  const RegisterLayout layout{{"i", 2}, {"j", 2}, {"data", 2}, {"test", 1}};
  const StateVector start = random_state(rng, layout);
  const VecC before = as_vector(start);
  const StateVector stepped = apply_step(start, parallel_test_step(test, {}));
  const StateVector dense =
      apply_unitary(start, UnitaryOp::from_matrix(test.to_matrix()),
                    {"i", "j", "data", "test"});
  CHECK(max_amp_diff(stepped, as_vector(dense)) < 1e-12);
  CHECK(max_amp_diff(dense, test.to_matrix() * before) < 1e-12);
}

TEST_CASE("grover branches rotate the test plane by twice the angle") {
  Rng rng(105);
  const MatD x = random_matrix(rng, 4, 4);
  const MatD u_k = random_orthogonal(rng, 4);
  const MatD u_q = random_orthogonal(rng, 4);
  const double lambda = score_scale(x, u_k, u_q, 3);
  const ParallelTest test =
      build_parallel_test(x, u_k, u_q, 3, lambda, TestVariant::kHadamard);
  const GroverOperator g = build_grover(test);
  const Eigen::Index dim = Eigen::Index{1} << g.work_qubits;

  for (int key = 0; key < 4; ++key)
    for (int query = 0; query < 4; ++query) {
      const double theta =
          theta_from_overlap(test.branch_overlap(key, query));
      const MatC& block = test.branch_block(key, query);
      const MatC& grover = g.branch_block(key, query);
      CHECK(is_unitary(grover, 1e-10));

      VecC good = block.col(0);
      VecC bad = good;
      for (Eigen::Index i = dim / 2; i < dim; ++i) good[i] = 0.0;
      for (Eigen::Index i = 0; i < dim / 2; ++i) bad[i] = 0.0;
      if (good.norm() < 1e-9 || bad.norm() < 1e-9) continue;
      good /= good.norm();
      bad /= bad.norm();

      const cplx m00 = good.dot(grover * good);
      const cplx m01 = good.dot(grover * bad);
      const cplx m10 = bad.dot(grover * good);
      const cplx m11 = bad.dot(grover * bad);
      const double c2 = std::cos(2.0 * theta);
      const double s2 = std::sin(2.0 * theta);
      CHECK(std::abs(m00 - cplx{c2, 0.0}) < 1e-10);
      CHECK(std::abs(m11 - cplx{c2, 0.0}) < 1e-10);
      CHECK(std::abs(m01 - cplx{s2, 0.0}) < 1e-10);
      CHECK(std::abs(m10 + cplx{s2, 0.0}) < 1e-10);
      // The rotation never leaves the two-dimensional test plane.
      const VecC rotated = grover * good;
      const VecC inplane = m00 * good + m10 * bad;
      CHECK((rotated - inplane).norm() < 1e-10);
    }
}

TEST_CASE("grover powers match repeated multiplication") {
  Rng rng(106);
  const MatD x = random_matrix(rng, 2, 2);
  const MatD u = random_orthogonal(rng, 2);
  const double lambda = score_scale(x, u, u, 1);
  const ParallelTest test =
      build_parallel_test(x, u, u, 1, lambda, TestVariant::kHadamard);
  const GroverOperator g = build_grover(test);
  const std::vector<MatC> powers = grover_powers(g, 3);
  REQUIRE(powers.size() == 4 * 8);
  const std::size_t branches = 4;
  for (std::size_t b = 0; b < branches; ++b) {
    MatC expect = MatC::Identity(g.branch[b].rows(), g.branch[b].cols());
    for (std::size_t c = 0; c < 8; ++c) {
      const MatC& got = powers[b + branches * c];
      CHECK(is_unitary(got, 1e-10));
      CHECK(max_abs(MatC(got - expect)) < 1e-11);
      expect = g.branch[b] * expect;
    }
  }
}

TEST_CASE("phase estimation is sharp on the grid and brackets off it") {
  // Synthetic branch family with known eigenphases on the work qubit.
  auto rotor = [](double fraction) {
    MatC m = MatC::Identity(2, 2);
    const double phi = 2.0 * kPi * fraction;
    m(1, 1) = cplx{std::cos(phi), std::sin(phi)};
    return m;
  };
  GroverOperator g;
  g.n = 2;
  g.work_qubits = 1;
  const double off_grid = 10.3 / 32.0;
  g.branch = {rotor(3.0 / 32.0), rotor(7.0 / 32.0), rotor(off_grid),
              rotor(29.0 / 32.0)};

  OracleWiring wiring;
  wiring.work = {"w"};
  const RegisterLayout layout{{"i", 1}, {"j", 1}, {"w", 1}, {"amp", 5}};
  for (int branch = 0; branch < 4; ++branch) {
    StateVector s = zero_state(layout);
    s = apply_unitary(std::move(s), UnitaryOp::from_matrix(pauli_x()), {"w"});
    if (branch & 1)
      s = apply_unitary(std::move(s), UnitaryOp::from_matrix(pauli_x()),
                        {"i"});
    if (branch & 2)
      s = apply_unitary(std::move(s), UnitaryOp::from_matrix(pauli_x()),
                        {"j"});
    s = phase_estimate(g, std::move(s), wiring, 5);
    const std::vector<double> dist = measure_distribution(s, "amp");
    if (branch == 2) {
      // Off-grid phase: the two bracketing codewords carry the bulk of the
      // weight and the nearer one is modal.
      CHECK(dist[10] + dist[11] >= 8.0 / (kPi * kPi));
      CHECK(dist[10] > dist[11]);
      for (std::size_t c = 0; c < dist.size(); ++c)
        if (c != 10 && c != 11) CHECK(dist[c] < dist[11]);
    } else {
      const std::size_t expected = branch == 0 ? 3 : branch == 1 ? 7 : 29;
      CHECK(dist[expected] == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(phase_estimation_steps(g, wiring, 2), ShapeError);
}

TEST_CASE("score word step writes the decoded grid value and self-inverts") {
  OracleWiring wiring;
  const CircuitStep step = score_word_step(wiring, 5, 4);
  REQUIRE(step.blocks.size() == 32);
  const RegisterLayout layout{{"amp", 5}, {"val", 4}};
  for (std::uint64_t c : {0ull, 8ull, 16ull, 23ull, 31ull}) {
    StateVector s = zero_state(layout);
    std::swap(s.amplitudes[0],
              s.amplitudes[layout.basis_index({{"amp", c}})]);
    const int word = quantize_value(value_from_codeword(c, 5), 4);
    StateVector written = apply_step(s, step);
    const cplx peak = amplitude_at(
        written, {{"amp", c}, {"val", encode_word(word, 4)}});
    CHECK(std::abs(peak - cplx{1.0, 0.0}) < 1e-12);
    const StateVector undone = apply_step(std::move(written), step);
    CHECK(std::abs(amplitude_at(undone, {{"amp", c}, {"val", 0}}) -
                   cplx{1.0, 0.0}) < 1e-12);
  }
}

TEST_CASE("aligned and orthogonal columns store exact score words") {
  // Identity inputs and weights: every key equals its query, so diagonal
  // overlaps are exactly one and off-diagonal overlaps exactly zero. Both
  // land on the phase grid, so the oracle output is exact and the work and
  // amplitude registers restore to zero.
  const MatD x = MatD::Identity(4, 4);
  const MatD u = MatD::Identity(4, 4);
  ParallelTest test =
      build_parallel_test(x, u, u, 4, 1.0, TestVariant::kHadamard);
  const ScoreOracle oracle = make_score_oracle(std::move(test), 4, 4);
  CHECK(oracle.amp_bits == 6);

  StateVector s = zero_state(oracle.layout());
  s = apply_unitary(std::move(s), UnitaryOp::from_matrix(hadamards(2)),
                    {"i"});
  s = apply_unitary(std::move(s), UnitaryOp::from_matrix(hadamards(2)),
                    {"j"});
  s = o_attention(std::move(s), oracle);

  const MatD scores = stored_score_matrix(s, oracle);
  const double one_word = dequantize_value(quantize_value(1.0, 4), 4);
  for (int key = 0; key < 4; ++key)
    for (int query = 0; query < 4; ++query)
      CHECK(scores(key, query) == (key == query ? one_word : 0.0));

  // Every stored word is sharp: the val register is perfectly correlated
  // with its pair and everything else returns to zero.
  for (std::uint64_t key = 0; key < 4; ++key)
    for (std::uint64_t query = 0; query < 4; ++query) {
      const int word = key == query ? quantize_value(1.0, 4) : 0;
      const std::vector<double> dist = measure_distribution_where(
          s, "val", {{"i", key}, {"j", query}});
      CHECK(dist[encode_word(word, 4)] ==
            doctest::Approx(1.0 / 16.0).epsilon(1e-10));
    }
  const auto [rest, prob] = post_select_zero(s, {"data", "test", "amp"});
  CHECK(prob == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("score oracle reproduces the classical fixed-point grid") {
  const ModelDims dims = ModelDims::d0();
  const ModelParams params = ModelParams::seeded(dims, 42);
  const ModelWeights w = params.realize();
  Rng rng(42);
  MatD x = random_matrix(rng, dims.d, dims.n);
  x.col(3).setZero();  // padding column: zero key and query
  const double lambda = ref_lambda_hat(x, w, dims);

  ParallelTest test = build_parallel_test(x, w.wk[0], w.wq[0], dims.p, lambda,
                                          TestVariant::kHadamard);
  const ScoreOracle oracle =
      make_score_oracle(std::move(test), dims.t_bits, dims.b_bits);
  CHECK(oracle.amp_bits == dims.b_bits + 2);
  CHECK(oracle.layout().total_qubits() == 22);

  StateVector s = zero_state(oracle.layout());
  s = apply_unitary(std::move(s), UnitaryOp::from_matrix(hadamards(2)),
                    {"i"});
  s = apply_unitary(std::move(s), UnitaryOp::from_matrix(hadamards(2)),
                    {"j"});
  s = o_attention(std::move(s), oracle);

  const MatD ref = ref_scores(x, w.wq[0], w.wk[0], dims.p);
  const MatD scores = stored_score_matrix(s, oracle);
  const double tol = lambda * std::pow(2.0, -dims.b_bits + 1);
  for (int key = 0; key < dims.n; ++key)
    for (int query = 0; query < dims.n; ++query) {
      const int mirror = grid_quantized_word(ref(key, query), lambda,
                                             oracle.amp_bits, dims.b_bits);
      CHECK(scores(key, query) ==
            doctest::Approx(dequantize_value(mirror, dims.b_bits) * lambda)
                .epsilon(1e-12));
      CHECK(std::abs(scores(key, query) - ref(key, query)) <= tol);
      // The zeroed padding column gives exactly zero scores.
      if (key == 3 || query == 3) CHECK(scores(key, query) == 0.0);
    }
}

TEST_CASE("score oracle construction guards its inputs") {
  Rng rng(107);
  const MatD x = random_matrix(rng, 4, 4);
  const MatD u = random_orthogonal(rng, 4);
  MatD skew = u;
  skew(0, 0) += 0.1;
  const double lambda = score_scale(x, u, u, 2);
  CHECK_THROWS_AS(
      build_parallel_test(x, skew, u, 2, lambda, TestVariant::kHadamard),
      NumericError);
  CHECK_THROWS_AS(
      build_parallel_test(x, u, u, 2, 1e-6, TestVariant::kHadamard),
      NumericError);
  CHECK_THROWS_AS(
      build_parallel_test(x, u, u, 9, lambda, TestVariant::kHadamard),
      ShapeError);
  CHECK_THROWS_AS(build_parallel_test(random_matrix(rng, 4, 3), u, u, 2,
                                      lambda, TestVariant::kHadamard),
                  ShapeError);

  ParallelTest test =
      build_parallel_test(x, u, u, 2, lambda, TestVariant::kHadamard);
  CHECK_THROWS_AS(make_score_oracle(test, 1, 4), ShapeError);

  // The swap variant widens the default wiring with a second data register.
  const MatD x2 = random_matrix(rng, 2, 2);
  const MatD u2 = random_orthogonal(rng, 2);
  ParallelTest swap_test = build_parallel_test(
      x2, u2, u2, 1, score_scale(x2, u2, u2, 1), TestVariant::kSwap);
  const ScoreOracle swapped = make_score_oracle(std::move(swap_test), 4, 4);
  REQUIRE(swapped.wiring.work.size() == 3);
  CHECK(swapped.wiring.work[1] == "data2");
  const RegisterLayout layout = swapped.layout();
  CHECK(layout.width("data") == 2);
  CHECK(layout.width("data2") == 2);
  CHECK(layout.width("test") == 1);
  CHECK(swapped.steps().size() == 9);
}
