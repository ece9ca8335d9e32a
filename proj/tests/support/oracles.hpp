#pragma once

// Straight-line reference implementations used as test oracles. They read
// parameter values out of library tensors but share no code with the library
// kernels or ops.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pat/answer_selector.hpp"
#include "pat/attention.hpp"
#include "pat/data.hpp"
#include "pat/rng.hpp"
#include "pat/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

using Vec = std::vector<double>;
using Valid = std::vector<std::uint8_t>;

Mat mat(const pat::Tensor& t);  // rank 2
Vec vec(const pat::Tensor& t);  // any rank, flattened
double max_abs_diff(const Mat& a, const pat::Tensor& b);
double max_abs_diff(const Vec& a, const pat::Tensor& b);

double gelu(double x);
Vec softmax(const Vec& x);
Mat matmul(const Mat& a, const Mat& b);
Mat affine(const Mat& x, const pat::Tensor& w, const pat::Tensor& b);
Mat layer_norm(const Mat& x, const pat::Tensor& gamma, const pat::Tensor& beta, double eps);

// Per-head attention weights are appended to `maps` when given.
Mat attention(const Mat& q_in, const Mat& kv_in, const Valid& valid, const pat::AttentionParams& p,
              std::vector<Mat>* maps = nullptr);
Mat ffn(const Mat& x, const pat::FfnParams& p);
Mat block(const Mat& x, const Mat& kv, const Valid& valid, const pat::AttentionBlock& b,
          bool use_residual, double eps);
std::pair<Mat, Mat> parallel_layer(const Mat& x_v, const Mat& x_l, const Valid& v_valid,
                                   const Valid& l_valid, const pat::ParallelLayer& layer,
                                   bool use_residual, double eps);

// kernels is [k x d_in x d_out]; `pad` zero rows precede the sequence.
Mat conv1d(const Mat& x, const pat::Tensor& kernels, std::size_t pad);

Vec attribute_reduce(const Mat& x, const Valid& valid, const pat::ReducerParams& p);

// Naive double loop over questions and ground truths with its own string
// normalisation.
double exact_match(const std::vector<std::string>& predictions,
                   const std::vector<std::vector<std::string>>& ground_truths);

// Multinomial logistic regression over bag-of-words question features,
// trained by full-batch gradient descent on `train`. Returns accuracy on
// `eval`. Images are never consulted.
double question_only_probe(const std::vector<pat::VqaExample>& train,
                           const std::vector<pat::VqaExample>& eval);

// Random tensor with entries uniform in [-scale, scale].
pat::Tensor random_tensor(const pat::Shape& shape, pat::Rng& rng, double scale = 1.0);
// Overwrites every tensor of the block with random values (biases and
// layer-norm affine included), so oracles exercise every term.
void randomize(pat::AttentionBlock& b, pat::Rng& rng, double scale);
void randomize(pat::ParallelLayer& l, pat::Rng& rng, double scale);
void randomize(pat::ReducerParams& p, pat::Rng& rng, double scale);

}  // namespace oracle
