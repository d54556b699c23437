#include "qformer/reference.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "json.hpp"
#include "qformer/ansatz.hpp"
#include "qformer/fixedpoint.hpp"

namespace qf {
namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

MatD orthogonal_from(const std::vector<double>& theta, int offset, int dim) {
  const PlaneRotationChain chain = so_chain(dim);
  const auto count = static_cast<std::ptrdiff_t>(chain.angle_count());
  std::vector<double> slice(theta.begin() + offset,
                            theta.begin() + offset + count);
  return chain.realize(slice);
}

}  // namespace

ModelDims ModelDims::d0() { return ModelDims{}; }

void ModelDims::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ShapeError(std::string("model dims: ") + what);
  };
  need(n >= 2 && is_power_of_two(n), "n must be a power of two >= 2");
  need(d >= 2 && is_power_of_two(d), "d must be a power of two >= 2");
  need(is_power_of_two(r), "r must be a power of two");
  need(r == d, "r must equal d so the residual can stack the input");
  need(p >= 1 && p <= d, "p must lie in [1, d]");
  need(heads >= 1 && is_power_of_two(heads), "heads must be a power of two");
  need(is_power_of_two(d_ff), "d_ff must be a power of two");
  need(d_ff >= stream(), "d_ff must be at least r * heads");
  need(vocab >= 2 && is_power_of_two(vocab), "vocab must be a power of two");
  need(t_bits >= 2 && t_bits <= 16, "t_bits must lie in [2, 16]");
  need(b_bits >= 2 && b_bits <= 20, "b_bits must lie in [2, 20]");
}

ModelParams::ModelParams(ModelDims dims, MatD embed)
    : dims_(dims), embed_(std::move(embed)) {
  dims_.validate();
  if (embed_.rows() != dims_.d || embed_.cols() != dims_.vocab) {
    throw ShapeError("embedding must be d x vocab");
  }
  const int so_d = dims_.d * (dims_.d - 1) / 2;
  const int stream = dims_.stream();
  int offset = 0;
  auto push = [&](const std::string& name, int count) {
    segments_.push_back(ParamSegment{name, offset, count});
    offset += count;
  };
  for (int h = 0; h < dims_.heads; ++h) {
    const std::string tag = std::to_string(h);
    push("wq" + tag, so_d);
    push("wk" + tag, so_d);
    push("wv" + tag, so_d);
  }
  push("wo", stream * (stream - 1) / 2);
  push("w1", dims_.d_ff * (stream - 1));
  push("w2", dims_.d_ff * (dims_.d_ff - 1) / 2);
  push("we", dims_.vocab * (dims_.vocab - 1) / 2);
  theta_.assign(offset, 0.0);
}

ModelParams ModelParams::seeded(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng embed_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  MatD embed(dims.d, dims.vocab);
  for (int v = 0; v < dims.vocab; ++v) {
    double norm2 = 0.0;
    do {
      for (int k = 0; k < dims.d; ++k) embed(k, v) = embed_rng.normal();
      norm2 = embed.col(v).squaredNorm();
    } while (norm2 < 1e-12);
    embed.col(v) /= std::sqrt(norm2);
  }
  ModelParams params(dims, std::move(embed));
  Rng rng(seed);
  for (double& angle : params.theta_) angle = 0.4 * rng.normal();
  return params;
}

void ModelParams::set_theta(std::vector<double> theta) {
  if (theta.size() != theta_.size()) {
    throw ShapeError("theta size does not match the segment table");
  }
  theta_ = std::move(theta);
}

void ModelParams::set_angle(int index, double value) {
  if (index < 0 || index >= angle_count()) {
    throw ShapeError("angle index out of range");
  }
  theta_[static_cast<std::size_t>(index)] = value;
}

const ParamSegment& ModelParams::segment(const std::string& name) const {
  for (const ParamSegment& seg : segments_) {
    if (seg.name == name) return seg;
  }
  throw ShapeError("unknown parameter segment: " + name);
}

ModelWeights ModelParams::realize() const {
  ModelWeights w;
  const int stream = dims_.stream();
  for (int h = 0; h < dims_.heads; ++h) {
    const std::string tag = std::to_string(h);
    w.wq.push_back(orthogonal_from(theta_, segment("wq" + tag).offset, dims_.d));
    w.wk.push_back(orthogonal_from(theta_, segment("wk" + tag).offset, dims_.d));
    w.wv.push_back(orthogonal_from(theta_, segment("wv" + tag).offset, dims_.d));
  }
  w.wo = orthogonal_from(theta_, segment("wo").offset, stream);

  const PlaneRotationChain prep = state_prep_chain(stream);
  const int per_column = static_cast<int>(prep.angle_count());
  w.w1.resize(stream, dims_.d_ff);
  const int w1_offset = segment("w1").offset;
  for (int m = 0; m < dims_.d_ff; ++m) {
    std::vector<double> slice(theta_.begin() + w1_offset + m * per_column,
                              theta_.begin() + w1_offset + (m + 1) * per_column);
    w.w1.col(m) = prep.realize(slice).col(0);
  }

  w.w2 = orthogonal_from(theta_, segment("w2").offset, dims_.d_ff);
  w.we = orthogonal_from(theta_, segment("we").offset, dims_.vocab);
  w.embed = embed_;
  return w;
}

std::string ModelParams::to_json() const {
  nlohmann::json j;
  j["version"] = kVersion;
  j["dims"] = {{"n", dims_.n},         {"d", dims_.d},
               {"p", dims_.p},         {"r", dims_.r},
               {"heads", dims_.heads}, {"d_ff", dims_.d_ff},
               {"vocab", dims_.vocab}, {"t_bits", dims_.t_bits},
               {"b_bits", dims_.b_bits}};
  j["theta"] = theta_;
  nlohmann::json columns = nlohmann::json::array();
  for (int v = 0; v < dims_.vocab; ++v) {
    nlohmann::json column = nlohmann::json::array();
    for (int k = 0; k < dims_.d; ++k) column.push_back(embed_(k, v));
    columns.push_back(std::move(column));
  }
  j["embedding"] = std::move(columns);
  return j.dump(2);
}

ModelParams ModelParams::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw IoError(std::string("model json: ") + err.what());
  }
  try {
    const nlohmann::json& dj = j.at("dims");
    ModelDims dims;
    dims.n = dj.at("n").get<int>();
    dims.d = dj.at("d").get<int>();
    dims.p = dj.at("p").get<int>();
    dims.r = dj.at("r").get<int>();
    dims.heads = dj.at("heads").get<int>();
    dims.d_ff = dj.at("d_ff").get<int>();
    dims.vocab = dj.at("vocab").get<int>();
    dims.t_bits = dj.at("t_bits").get<int>();
    dims.b_bits = dj.at("b_bits").get<int>();
    const auto& columns = j.at("embedding");
    if (static_cast<int>(columns.size()) != dims.vocab) {
      throw IoError("model json: embedding column count mismatch");
    }
    MatD embed(dims.d, dims.vocab);
    for (int v = 0; v < dims.vocab; ++v) {
      if (static_cast<int>(columns[v].size()) != dims.d) {
        throw IoError("model json: embedding row count mismatch");
      }
      for (int k = 0; k < dims.d; ++k) embed(k, v) = columns[v][k].get<double>();
    }
    ModelParams params(dims, std::move(embed));
    params.set_theta(j.at("theta").get<std::vector<double>>());
    return params;
  } catch (const nlohmann::json::exception& err) {
    throw IoError(std::string("model json: ") + err.what());
  }
}

MatD ref_positional(int d, int n) {
  if (d < 2 || d % 2 != 0 || n < 1) {
    throw ShapeError("positional matrix needs even d >= 2 and n >= 1");
  }
  MatD pos(d, n);
  for (int j = 0; j < d / 2; ++j) {
    const double w = std::pow(10000.0, -2.0 * j / d);
    for (int i = 0; i < n; ++i) {
      pos(2 * j, i) = std::sin(i * w);
      pos(2 * j + 1, i) = std::cos(i * w);
    }
  }
  return pos;
}

MatD ref_scores(const MatD& x, const MatD& wq, const MatD& wk, int p) {
  const MatD keys = wk.leftCols(p).transpose() * x;     // p x n, columns k_j
  const MatD queries = wq.leftCols(p).transpose() * x;  // p x n, columns q_i
  return keys.transpose() * queries;
}

MatD ref_masked(const MatD& lambda) {
  MatD out = lambda;
  for (int j = 0; j < out.rows(); ++j) {
    for (int i = 0; i < j && i < out.cols(); ++i) out(j, i) = 0.0;
  }
  return out;
}

double ref_lambda_hat(const MatD& x, const ModelWeights& w,
                      const ModelDims& dims) {
  double peak = 0.0;
  for (int h = 0; h < dims.heads; ++h) {
    const MatD keys = w.wk[h].leftCols(dims.p).transpose() * x;
    const MatD queries = w.wq[h].leftCols(dims.p).transpose() * x;
    for (int i = 0; i < x.cols(); ++i) {
      peak = std::max(peak, keys.col(i).squaredNorm());
      peak = std::max(peak, queries.col(i).squaredNorm());
    }
  }
  return power_of_two_at_least(peak);
}

BlockTrace ref_block(const MatD& x, const ModelWeights& w,
                     const ModelDims& dims, bool masked, EvalMode mode) {
  if (x.rows() != dims.d || x.cols() != dims.n) {
    throw ShapeError("block input must be d x n");
  }
  BlockTrace trace;
  trace.lambda_hat = ref_lambda_hat(x, w, dims);
  const int score_bits = std::max(dims.t_bits, dims.b_bits + 2);

  trace.zcat.resize(dims.stream(), dims.n);
  for (int h = 0; h < dims.heads; ++h) {
    MatD lambda = ref_scores(x, w.wq[h], w.wk[h], dims.p);
    if (masked) lambda = ref_masked(lambda);
    if (mode == EvalMode::kWords) {
      for (int j = 0; j < lambda.rows(); ++j) {
        for (int i = 0; i < lambda.cols(); ++i) {
          const int word = grid_quantized_word(lambda(j, i), trace.lambda_hat,
                                               score_bits, dims.b_bits);
          lambda(j, i) = trace.lambda_hat * dequantize_value(word, dims.b_bits);
        }
      }
    }
    trace.lambda.push_back(lambda);
    trace.zcat.middleRows(h * dims.r, dims.r) =
        w.wv[h].leftCols(dims.r).transpose() * x * lambda.transpose();
  }

  trace.zhat = w.wo.transpose() * trace.zcat;
  trace.zprime = trace.zhat;
  for (int h = 0; h < dims.heads; ++h) {
    trace.zprime.middleRows(h * dims.d, dims.d) += x;
  }

  if (mode == EvalMode::kExact) {
    trace.gate = (w.w1.transpose() * trace.zprime).cwiseMax(0.0);
  } else {
    trace.gate.resize(dims.d_ff, dims.n);
    for (int i = 0; i < dims.n; ++i) {
      const double norm = trace.zprime.col(i).norm();
      if (norm < 1e-300) {
        trace.gate.col(i).setZero();
        continue;
      }
      for (int m = 0; m < dims.d_ff; ++m) {
        const double overlap =
            std::clamp(w.w1.col(m).dot(trace.zprime.col(i)) / norm, -1.0, 1.0);
        const std::uint64_t code =
            codeword_from_theta(theta_from_overlap(overlap), dims.t_bits);
        const double value =
            std::max(0.0, value_from_codeword(code, dims.t_bits));
        const int word = quantize_value(value, dims.b_bits);
        trace.gate(m, i) = norm * dequantize_value(word, dims.b_bits);
      }
    }
  }

  trace.f = w.w2.leftCols(dims.stream()).transpose() * trace.gate;
  return trace;
}

MatD ref_logits(const MatD& f, const ModelWeights& w, const ModelDims& dims) {
  if (f.rows() != dims.stream()) throw ShapeError("logits input must have stream rows");
  if (dims.vocab < dims.stream()) {
    throw ShapeError("vocab must be at least the stream width for logits");
  }
  return w.we.leftCols(dims.stream()) * f;
}

double ref_loss(const MatD& logits, int column, int target) {
  if (column < 0 || column >= logits.cols() || target < 0 ||
      target >= logits.rows()) {
    throw ShapeError("loss indices out of range");
  }
  const double norm2 = logits.col(column).squaredNorm();
  if (norm2 < 1e-300) return 1.0;
  const double hit = logits(target, column);
  return 1.0 - hit * hit / norm2;
}

}  // namespace qf
