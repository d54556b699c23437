#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "qformer/block.hpp"
#include "qformer/encoding.hpp"
#include "qformer/pretrain.hpp"
#include "qformer/reference.hpp"

using namespace qf;

namespace {

double max_abs_diff(const MatD& a, const MatD& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// 64 characters, 16 distinct 3-gram patterns over 4 bytes, each with a
// unique continuation.
std::string pattern_text() {
  const std::string base = "abc acb bca cab ";
  std::string text;
  while (text.size() < 64) text += base;
  text.resize(64);
  return text;
}

// A model a couple of descent steps past initialization, used wherever a
// test needs a readout column with live gates.
ModelParams warm_params(const ModelDims& dims, int iterations = 2) {
  Corpus corpus = Corpus::from_text(pattern_text(), dims.vocab);
  TrainConfig config;
  config.iterations = iterations;
  return train(corpus, dims, config).params;
}

// Logits state of the first corpus window plus the classical quantities it
// must reproduce.
struct ReadoutCase {
  MatD logits;
  StateVector state;
  int target = 0;
};

ReadoutCase readout_case(const ModelDims& dims, const ModelParams& params) {
  Corpus corpus = Corpus::from_text(pattern_text(), dims.vocab);
  const ModelWeights w = params.realize();
  const std::vector<int> window(corpus.token_ids.begin(),
                                corpus.token_ids.begin() + 3);
  const MatD x = window_input(window, corpus.pad_id(), params.embedding(), dims);
  const BlockTrace trace = ref_block(x, w, dims, false, EvalMode::kExact);
  return ReadoutCase{ref_logits(trace.f, w, dims), logits_state(trace.f, w, dims),
                     corpus.token_ids[3]};
}

}  // namespace

TEST_CASE("byte corpus builds a first appearance vocabulary with a pad slot") {
  const Corpus corpus = Corpus::from_text("abc acb bca cab ", 8);
  REQUIRE(corpus.vocab.size() == 4);
  CHECK(corpus.vocab[0] == 'a');
  CHECK(corpus.vocab[1] == 'b');
  CHECK(corpus.vocab[2] == 'c');
  CHECK(corpus.vocab[3] == ' ');
  CHECK(corpus.pad_id() == 7);
  REQUIRE(corpus.token_ids.size() == 16);
  const std::vector<int> head = {0, 1, 2, 3, 0, 2, 1, 3};
  for (std::size_t i = 0; i < head.size(); ++i) {
    CHECK(corpus.token_ids[i] == head[i]);
  }
  for (int id : corpus.token_ids) {
    CHECK(id >= 0);
    CHECK(id < corpus.pad_id());
  }
  CHECK(corpus.id_of('c') == 2);
  CHECK(corpus.byte_of(3) == ' ');
  CHECK_THROWS_AS(corpus.id_of('z'), ShapeError);
  CHECK_THROWS_AS(corpus.byte_of(4), ShapeError);
  CHECK_THROWS_AS(corpus.byte_of(corpus.pad_id()), ShapeError);
  CHECK_THROWS_AS(Corpus::from_text("abcdefgh", 8), ShapeError);
  CHECK_THROWS_AS(Corpus::from_text("ab", 1), ShapeError);
}

TEST_CASE("corpus files load as raw bytes") {
  const std::string path = "pretrain_corpus_tmp.txt";
  {
    std::ofstream out(path, std::ios::binary);
    out << pattern_text();
  }
  const Corpus from_file = Corpus::from_file(path, 8);
  const Corpus from_text = Corpus::from_text(pattern_text(), 8);
  CHECK(from_file.text == from_text.text);
  CHECK(from_file.vocab == from_text.vocab);
  CHECK(from_file.token_ids == from_text.token_ids);
  std::remove(path.c_str());
  CHECK_THROWS_AS(Corpus::from_file("no_such_corpus_file.txt", 8), IoError);
}

TEST_CASE("window inputs right align tokens before a pad readout column") {
  const ModelDims dims = ModelDims::d0();
  const ModelParams params = ModelParams::seeded(dims, 42);
  const MatD& embed = params.embedding();
  const MatD positions = ref_positional(dims.d, dims.n);
  const int pad = dims.vocab - 1;

  const MatD full = window_input({0, 1, 2}, pad, embed, dims);
  CHECK(max_abs_diff(full.col(0), embed.col(0) + positions.col(0)) < 1e-15);
  CHECK(max_abs_diff(full.col(1), embed.col(1) + positions.col(1)) < 1e-15);
  CHECK(max_abs_diff(full.col(2), embed.col(2) + positions.col(2)) < 1e-15);
  CHECK(max_abs_diff(full.col(3), embed.col(pad) + positions.col(3)) < 1e-15);

  const MatD single = window_input({2}, pad, embed, dims);
  CHECK(max_abs_diff(single.col(0), embed.col(pad) + positions.col(0)) < 1e-15);
  CHECK(max_abs_diff(single.col(1), embed.col(pad) + positions.col(1)) < 1e-15);
  CHECK(max_abs_diff(single.col(2), embed.col(2) + positions.col(2)) < 1e-15);
  CHECK(max_abs_diff(single.col(3), embed.col(pad) + positions.col(3)) < 1e-15);

  const MatD empty = window_input({}, pad, embed, dims);
  for (int i = 0; i < dims.n; ++i) {
    CHECK(max_abs_diff(empty.col(i), embed.col(pad) + positions.col(i)) < 1e-15);
  }

  CHECK_THROWS_AS(window_input({0, 1, 2, 3}, pad, embed, dims), ShapeError);
  CHECK_THROWS_AS(window_input({dims.vocab}, pad, embed, dims), ShapeError);
  CHECK_THROWS_AS(window_input({0}, dims.vocab, embed, dims), ShapeError);
}

TEST_CASE("vocabulary rotation acts on the neuron register") {
  const ModelDims dims = ModelDims::d0();
  Rng rng(5);
  MatD f(dims.d_ff, dims.n);
  for (int m = 0; m < dims.d_ff; ++m) {
    for (int i = 0; i < dims.n; ++i) f(m, i) = rng.normal();
  }
  const RegisterLayout layout{{"m", 3}, {"i", 2}};
  const StateVector prepared =
      prepare_matrix_state(f, zero_state(layout), "m", "i");

  SUBCASE("identity leaves the state unchanged") {
    const StateVector projected =
        apply_vocab_projection(prepared, MatD::Identity(8, 8));
    REQUIRE(projected.amplitudes.size() == prepared.amplitudes.size());
    for (std::size_t k = 0; k < prepared.amplitudes.size(); ++k) {
      CHECK(std::abs(projected.amplitudes[k] - prepared.amplitudes[k]) < 1e-15);
    }
    CHECK(projected.global_scale == doctest::Approx(prepared.global_scale));
  }

  SUBCASE("a one hot block output maps to a rotation column") {
    const ModelWeights w = ModelParams::seeded(dims, 42).realize();
    MatD one_hot = MatD::Zero(dims.d_ff, dims.n);
    one_hot(5, 2) = 2.5;
    const StateVector projected = apply_vocab_projection(
        prepare_matrix_state(one_hot, zero_state(layout), "m", "i"), w.we);
    MatD expected = MatD::Zero(dims.d_ff, dims.n);
    expected.col(2) = 2.5 * w.we.col(5);
    CHECK(max_abs_diff(state_matrix(projected, dims.d_ff, dims.n), expected) <
          1e-12);
  }

  SUBCASE("width and orthogonality are enforced") {
    const StateVector narrow = zero_state(RegisterLayout{{"m", 2}, {"i", 2}});
    CHECK_THROWS_AS(apply_vocab_projection(narrow, MatD::Identity(8, 8)),
                    ShapeError);
    MatD skewed = MatD::Identity(8, 8);
    skewed(0, 1) = 0.5;
    CHECK_THROWS_AS(apply_vocab_projection(prepared, skewed), NumericError);
  }
}

TEST_CASE("projected logits state carries the classical logits exactly") {
  const ModelDims dims = ModelDims::d0();
  const ModelParams params = warm_params(dims);
  const ReadoutCase rc = readout_case(dims, params);
  CHECK(max_abs_diff(state_matrix(rc.state, dims.vocab, dims.n), rc.logits) <
        1e-9);

  ModelDims wide = dims;
  wide.d_ff = 16;
  const ModelWeights w_wide = ModelParams::seeded(wide, 3).realize();
  const MatD f = MatD::Ones(wide.stream(), wide.n);
  CHECK_THROWS_AS(logits_state(f, w_wide, wide), ShapeError);
}

TEST_CASE("overlap loss reads the conditional readout probability") {
  const ModelDims dims = ModelDims::d0();
  const ModelParams params = warm_params(dims);
  const ModelWeights w = params.realize();
  const ReadoutCase rc = readout_case(dims, params);

  SUBCASE("matches the normalized logit loss at every position and target") {
    for (int t_index = 0; t_index + 1 < dims.n; ++t_index) {
      for (int target = 0; target < dims.vocab; ++target) {
        const double want = ref_loss(rc.logits, t_index + 1, target);
        const double got = overlap_loss(rc.state, t_index, target);
        CHECK(std::abs(got - want) < 1e-12);
      }
    }
  }

  SUBCASE("perfect and orthogonal predictions hit the endpoints") {
    const int target = 3;
    MatD aligned(dims.stream(), dims.n);
    for (int i = 0; i < dims.n; ++i) {
      aligned.col(i) = w.we.transpose().col(target);
    }
    const StateVector state = logits_state(aligned, w, dims);
    CHECK(overlap_loss(state, dims.n - 2, target) < 1e-12);
    CHECK(overlap_loss(state, dims.n - 2, (target + 1) % dims.vocab) >
          1.0 - 1e-12);
  }

  SUBCASE("stays within the unit interval on random states") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      MatD f(dims.stream(), dims.n);
      for (int k = 0; k < f.size(); ++k) f(k) = rng.normal();
      const StateVector state = logits_state(f, w, dims);
      for (int t_index = 0; t_index + 1 < dims.n; ++t_index) {
        for (int target = 0; target < dims.vocab; ++target) {
          const double loss = overlap_loss(state, t_index, target);
          CHECK(loss >= 0.0);
          CHECK(loss <= 1.0);
        }
      }
    }
  }

  SUBCASE("rejects bad indices and missing registers") {
    CHECK_THROWS_AS(overlap_loss(rc.state, -1, 0), ShapeError);
    CHECK_THROWS_AS(overlap_loss(rc.state, dims.n - 1, 0), ShapeError);
    CHECK_THROWS_AS(overlap_loss(rc.state, 0, dims.vocab), ShapeError);
    CHECK_THROWS_AS(overlap_loss(rc.state, 0, -1), ShapeError);
    const StateVector no_m = zero_state(RegisterLayout{{"k", 2}, {"i", 2}});
    CHECK_THROWS_AS(overlap_loss(no_m, 0, 0), ShapeError);
  }

  SUBCASE("a weightless readout position is an error") {
    MatD f(dims.stream(), dims.n);
    Rng rng(3);
    for (int k = 0; k < f.size(); ++k) f(k) = rng.normal();
    f.col(dims.n - 1).setZero();
    const StateVector state = logits_state(f, w, dims);
    CHECK_THROWS_AS(overlap_loss(state, dims.n - 2, 0), NumericError);
    const LossSampling sampled{LossSampling::Mode::kSampled, 1000, 1};
    CHECK_THROWS_AS(overlap_loss(state, dims.n - 2, 0, sampled), NumericError);
  }
}

TEST_CASE("sampled loss converges to the exact loss") {
  const ModelDims dims = ModelDims::d0();
  const ReadoutCase rc = readout_case(dims, warm_params(dims));
  const double exact = overlap_loss(rc.state, dims.n - 2, rc.target);

  const LossSampling hundred_k{LossSampling::Mode::kSampled, 100000, 1};
  const double sampled =
      overlap_loss(rc.state, dims.n - 2, rc.target, hundred_k);
  CHECK(std::abs(sampled - exact) < 2e-3);

  const LossSampling million{LossSampling::Mode::kSampled, 1000000, 1};
  CHECK(std::abs(overlap_loss(rc.state, dims.n - 2, rc.target, million) -
                 exact) < 1e-3);

  CHECK(overlap_loss(rc.state, dims.n - 2, rc.target, hundred_k) == sampled);
  const LossSampling other_seed{LossSampling::Mode::kSampled, 100000, 9};
  const double resampled =
      overlap_loss(rc.state, dims.n - 2, rc.target, other_seed);
  CHECK(resampled != sampled);
  CHECK(std::abs(resampled - exact) < 2e-3);

  const LossSampling no_shots{LossSampling::Mode::kSampled, 0, 1};
  CHECK_THROWS_AS(overlap_loss(rc.state, dims.n - 2, rc.target, no_shots),
                  NumericError);
}

TEST_CASE("training reduces the corpus loss deterministically") {
  const ModelDims dims = ModelDims::d0();
  const Corpus corpus = Corpus::from_text(pattern_text(), dims.vocab);

  SUBCASE("finite differences descend and reproduce bitwise") {
    TrainConfig config;
    config.iterations = 15;
    const TrainResult first = train(corpus, dims, config);
    REQUIRE(first.losses.size() == 16);
    const double windows =
        static_cast<double>(corpus.token_ids.size()) - config.batch_span;
    for (double loss : first.losses) {
      CHECK(loss >= 0.0);
      CHECK(loss <= windows);
    }
    CHECK(first.losses.back() < 0.85 * first.losses.front());

    const TrainResult second = train(corpus, dims, config);
    CHECK(first.losses == second.losses);
    CHECK(first.params.theta() == second.params.theta());
  }

  SUBCASE("zero learning rate leaves the trace flat") {
    TrainConfig config;
    config.iterations = 3;
    config.learning_rate = 0.0;
    const TrainResult result = train(corpus, dims, config);
    REQUIRE(result.losses.size() == 4);
    for (double loss : result.losses) CHECK(loss == result.losses[0]);
  }

  SUBCASE("zero iterations return the starting loss only") {
    TrainConfig config;
    config.iterations = 0;
    CHECK(train(corpus, dims, config).losses.size() == 1);
  }

  SUBCASE("configuration errors are rejected") {
    TrainConfig config;
    config.batch_span = 0;
    CHECK_THROWS_AS(train(corpus, dims, config), ShapeError);
    config.batch_span = dims.n;
    CHECK_THROWS_AS(train(corpus, dims, config), ShapeError);
    config = TrainConfig{};
    CHECK_THROWS_AS(train(Corpus::from_text("ab", dims.vocab), dims, config),
                    ShapeError);
    CHECK_THROWS_AS(train(Corpus::from_text(pattern_text(), 16), dims, config),
                    ShapeError);
    config.iterations = -1;
    CHECK_THROWS_AS(train(corpus, dims, config), ShapeError);
    config = TrainConfig{};
    config.fd_step = 0.0;
    CHECK_THROWS_AS(train(corpus, dims, config), ShapeError);
    config = TrainConfig{};
    config.gradient_clip = -1.0;
    CHECK_THROWS_AS(train(corpus, dims, config), ShapeError);
  }

  SUBCASE("spsa runs deterministically") {
    TrainConfig config;
    config.optimizer = Optimizer::kSpsa;
    config.iterations = 5;
    const TrainResult first = train(corpus, dims, config);
    const TrainResult second = train(corpus, dims, config);
    REQUIRE(first.losses.size() == 6);
    CHECK(first.losses == second.losses);
    for (double loss : first.losses) CHECK(std::isfinite(loss));
  }
}

TEST_CASE("a single pair memorizes to near zero loss") {
  const ModelDims dims = ModelDims::d0();
  const Corpus corpus = Corpus::from_text("ab", dims.vocab);
  TrainConfig config;
  config.learning_rate = 0.2;
  config.iterations = 200;
  config.batch_span = 1;
  const TrainResult result = train(corpus, dims, config);
  CHECK(result.losses.front() > 0.5);
  CHECK(result.losses.back() <= 0.01);

  const TrainedModel model{result.params, corpus.vocab};
  CHECK(generate(model, "a", 0) == "a");
  CHECK(generate(model, "a", 1) == "ab");
  CHECK(generate(model, "a", 1) == generate(model, "a", 1));
  CHECK(generate(model, "a", 3).substr(0, 2) == "ab");
  CHECK_THROWS_AS(generate(model, "az", 1), ShapeError);
  CHECK_THROWS_AS(generate(model, "a", -1), ShapeError);
}

TEST_CASE("finite differences and simultaneous perturbation agree in sign") {
  const ModelDims dims = ModelDims::d0();
  const Corpus corpus = Corpus::from_text("abc abc abc ", dims.vocab);
  TrainConfig warm;
  warm.iterations = 3;
  ModelParams params = train(corpus, dims, warm).params;

  std::vector<MatD> inputs;
  std::vector<int> targets;
  for (std::size_t s = 0; s + 3 < corpus.token_ids.size(); ++s) {
    const std::vector<int> window(corpus.token_ids.begin() + s,
                                  corpus.token_ids.begin() + s + 3);
    inputs.push_back(
        window_input(window, corpus.pad_id(), params.embedding(), dims));
    targets.push_back(corpus.token_ids[s + 3]);
  }
  auto cumulative = [&](const std::vector<double>& theta) {
    params.set_theta(theta);
    const ModelWeights w = params.realize();
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const BlockTrace trace =
          ref_block(inputs[i], w, dims, false, EvalMode::kExact);
      total += ref_loss(ref_logits(trace.f, w, dims), dims.n - 1, targets[i]);
    }
    return total;
  };

  const std::vector<double> theta = params.theta();
  const int count = static_cast<int>(theta.size());
  std::vector<double> fd(theta.size()), probe = theta;
  const double h = 1e-3;
  for (int j = 0; j < count; ++j) {
    probe[j] = theta[j] + h;
    const double up = cumulative(probe);
    probe[j] = theta[j] - h;
    const double down = cumulative(probe);
    probe[j] = theta[j];
    fd[j] = (up - down) / (2.0 * h);
  }

  const double c = 0.02;
  const int draws = 2000;
  std::vector<double> averaged(theta.size(), 0.0);
  Rng rng(7);
  std::vector<double> delta(theta.size());
  for (int r = 0; r < draws; ++r) {
    for (double& d : delta) d = (rng.raw64() & 1) ? 1.0 : -1.0;
    for (int j = 0; j < count; ++j) probe[j] = theta[j] + c * delta[j];
    const double up = cumulative(probe);
    for (int j = 0; j < count; ++j) probe[j] = theta[j] - c * delta[j];
    const double down = cumulative(probe);
    const double slope = (up - down) / (2.0 * c);
    for (int j = 0; j < count; ++j) averaged[j] += slope * delta[j] / draws;
  }

  // The sign of a near-zero gradient is not a stable observable at a finite
  // draw count, so agreement is scored on the 50 largest components.
  std::vector<int> order(theta.size());
  for (int j = 0; j < count; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(fd[a]) > std::abs(fd[b]);
  });
  int agree = 0;
  for (int k = 0; k < 50; ++k) {
    const int j = order[k];
    if ((fd[j] > 0.0) == (averaged[j] > 0.0)) ++agree;
  }
  CHECK(agree >= 45);
}

TEST_CASE("trained models round trip through json") {
  const ModelDims dims = ModelDims::d0();
  const Corpus corpus = Corpus::from_text("ab", dims.vocab);
  TrainConfig config;
  config.iterations = 2;
  config.batch_span = 1;
  const TrainedModel model{train(corpus, dims, config).params, corpus.vocab};

  const TrainedModel loaded = TrainedModel::from_json(model.to_json());
  CHECK(loaded.params.theta() == model.params.theta());
  CHECK(loaded.vocab == model.vocab);
  CHECK(loaded.params.dims().vocab == dims.vocab);
  CHECK(max_abs_diff(loaded.params.embedding(), model.params.embedding()) ==
        0.0);
  CHECK(generate(loaded, "a", 1) == generate(model, "a", 1));

  CHECK_THROWS_AS(TrainedModel::from_json("not json"), IoError);
  CHECK_THROWS_AS(TrainedModel::from_json("{\"vocab\": []}"), IoError);
  nlohmann::json crowded = nlohmann::json::parse(model.to_json());
  crowded["vocab"] = {0, 1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(TrainedModel::from_json(crowded.dump()), IoError);
  crowded["vocab"] = {300};
  CHECK_THROWS_AS(TrainedModel::from_json(crowded.dump()), IoError);
}

TEST_CASE("greedy decoding follows the largest logit magnitude") {
  MatD logits(4, 2);
  logits << 0.5, 0.1, -2.0, 0.2, 1.0, 0.2, 3.0, 0.05;

  SUBCASE("magnitude wins regardless of sign, pad never decodes") {
    CHECK(argmax_token(logits, 0, 3) == 1);
    CHECK(argmax_token(logits, 0, 1) == 3);
    CHECK(argmax_token(logits, 1, 3) == 1);
  }

  SUBCASE("ties resolve to the smallest id") {
    CHECK(argmax_token(logits, 1, 0) == 1);
  }

  SUBCASE("positive rescaling never changes the choice") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
      MatD sample(8, 4);
      for (int k = 0; k < sample.size(); ++k) sample(k) = rng.normal();
      const double scale = 0.05 + 10.0 * rng.uniform();
      for (int column = 0; column < 4; ++column) {
        CHECK(argmax_token(sample, column, 7) ==
              argmax_token(MatD(scale * sample), column, 7));
      }
    }
  }

  SUBCASE("bad columns are rejected") {
    CHECK_THROWS_AS(argmax_token(logits, 2, 3), ShapeError);
    CHECK_THROWS_AS(argmax_token(logits, -1, 3), ShapeError);
  }
}

TEST_CASE("full circuit forwards drive loss and decoding") {
  const ModelDims dims = ModelDims::d0();
  const ModelParams params = warm_params(dims);
  const ModelWeights w = params.realize();
  const Corpus corpus = Corpus::from_text(pattern_text(), dims.vocab);

  SUBCASE("circuit loss tracks the word quantized reference") {
    const std::vector<int> window(corpus.token_ids.begin(),
                                  corpus.token_ids.begin() + 3);
    const MatD x =
        window_input(window, corpus.pad_id(), params.embedding(), dims);
    StagedState attended = residual(x, w, dims, false);
    const MatD zprime = state_matrix(attended.state, dims.stream(), dims.n);
    StagedState gated = ffn_pipeline(zprime, w, dims);
    const StateVector projected =
        apply_vocab_projection(std::move(gated.state), w.we);
    const double circuit = overlap_loss(projected, dims.n - 2, corpus.token_ids[3]);

    const BlockTrace words = ref_block(x, w, dims, false, EvalMode::kWords);
    const double reference =
        ref_loss(ref_logits(words.f, w, dims), dims.n - 1, corpus.token_ids[3]);
    CHECK(circuit >= 0.0);
    CHECK(circuit <= 1.0);
    CHECK(std::abs(circuit - reference) < 0.12);
  }

  SUBCASE("circuit training and decoding run end to end") {
    const Corpus pair = Corpus::from_text("ab", dims.vocab);
    TrainConfig config;
    config.iterations = 1;
    config.batch_span = 1;
    config.optimizer = Optimizer::kSpsa;
    config.mode = RunMode::kFullCircuit;
    const TrainResult result = train(pair, dims, config);
    REQUIRE(result.losses.size() == 2);
    for (double loss : result.losses) {
      CHECK(loss >= 0.0);
      CHECK(loss <= 1.0);
    }

    TrainConfig memorize;
    memorize.learning_rate = 0.2;
    memorize.iterations = 200;
    memorize.batch_span = 1;
    const TrainedModel model{train(pair, dims, memorize).params, pair.vocab};
    CHECK(generate(model, "a", 1, RunMode::kFullCircuit) == "ab");
  }
}
