#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <set>

#include <png.h>

#include "mate/errors.hpp"
#include "mate/eval.hpp"

namespace mate::eval {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Row i of the result holds p_{j|i} for a Gaussian kernel whose precision is
// tuned by bisection so that the conditional has the requested perplexity.
MatrixXd conditional_affinities(const MatrixXd& d2, double perplexity) {
  const Eigen::Index n = d2.rows();
  const double target = std::log(perplexity);
  MatrixXd p = MatrixXd::Zero(n, n);
  VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 100; ++iter) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = (j == i) ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row(j);
      }
      sum = std::max(sum, 1e-300);
      double entropy = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) entropy += beta * d2(i, j) * row(j);
      entropy = entropy / sum + std::log(sum);
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
  }
  return p;
}

constexpr std::array<std::array<unsigned char, 3>, 10> kPalette = {{
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189},
    {140, 86, 75}, {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207},
}};

}  // namespace

TsneResult tsne(const MatrixXd& points, const std::vector<int>& labels, const TsneOptions& options) {
  if (points.rows() != static_cast<Eigen::Index>(labels.size())) throw DimensionError("t-SNE points/labels mismatch");
  if (points.rows() < 4) throw UsageError("t-SNE needs at least 4 points");

  std::vector<Eigen::Index> keep(static_cast<std::size_t>(points.rows()));
  std::iota(keep.begin(), keep.end(), 0);
  std::mt19937_64 rng(options.seed);
  if (points.rows() > options.max_points) {
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(static_cast<std::size_t>(options.max_points));
    std::sort(keep.begin(), keep.end());
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  MatrixXd x(n, points.cols());
  TsneResult result;
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = points.row(keep[static_cast<std::size_t>(i)]);
    result.labels.push_back(labels[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])]);
  }
  x = x.rowwise() - x.colwise().mean();
  const double max_abs = x.cwiseAbs().maxCoeff();
  if (max_abs > 0) x /= max_abs;

  const VectorXd sq = x.rowwise().squaredNorm();
  MatrixXd d2 = ((-2.0 * x * x.transpose()).colwise() + sq).rowwise() + sq.transpose();
  d2 = d2.cwiseMax(0.0);
  const double perplexity = std::min(options.perplexity, static_cast<double>(n - 1) / 3.0);
  MatrixXd p = conditional_affinities(d2, perplexity);
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);

  std::normal_distribution<double> normal(0.0, 1e-4);
  MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = normal(rng), y(i, 1) = normal(rng);
  MatrixXd velocity = MatrixXd::Zero(n, 2), gains = MatrixXd::Ones(n, 2);
  const double learning_rate = std::max(static_cast<double>(n) / 12.0, 50.0);
  const int exaggeration_iters = std::min(250, options.iterations / 4);

  for (int iter = 0; iter < options.iterations; ++iter) {
    const double exaggeration = iter < exaggeration_iters ? 12.0 : 1.0;
    const double momentum = iter < exaggeration_iters ? 0.5 : 0.8;
    const VectorXd ysq = y.rowwise().squaredNorm();
    MatrixXd num = ((-2.0 * y * y.transpose()).colwise() + ysq).rowwise() + ysq.transpose();
    num = (1.0 + num.array()).inverse();
    num.diagonal().setZero();
    const double qsum = std::max(num.sum(), 1e-300);
    const MatrixXd q = (num / qsum).cwiseMax(1e-12);
    const MatrixXd w = (exaggeration * p - q).cwiseProduct(num);
    const MatrixXd grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);

    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0) == (velocity(i, k) > 0);
        gains(i, k) = same_sign ? std::max(gains(i, k) * 0.8, 0.01) : gains(i, k) + 0.2;
      }
    velocity = momentum * velocity - learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y = y.rowwise() - y.colwise().mean();
  }
  result.embedding = std::move(y);
  return result;
}

void write_scatter_png(const MatrixXd& embedding, const std::vector<int>& labels, const std::filesystem::path& path,
                       int size) {
  if (embedding.cols() != 2) throw DimensionError("scatter plot needs a 2-D embedding");
  const auto width = static_cast<std::size_t>(size);
  std::vector<unsigned char> image(width * width * 3, 255);
  const double margin = 0.05 * size;
  const Eigen::RowVector2d lo = embedding.colwise().minCoeff();
  const Eigen::RowVector2d hi = embedding.colwise().maxCoeff();
  const double span = std::max({hi(0) - lo(0), hi(1) - lo(1), 1e-12});
  const int radius = 3;
  for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
    const double px = margin + (embedding(i, 0) - lo(0)) / span * (size - 2 * margin);
    const double py = size - (margin + (embedding(i, 1) - lo(1)) / span * (size - 2 * margin));
    const auto& color = kPalette[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]) % kPalette.size()];
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy > radius * radius) continue;
        const int cx = static_cast<int>(px) + dx, cy = static_cast<int>(py) + dy;
        if (cx < 0 || cy < 0 || cx >= size || cy >= size) continue;
        std::copy(color.begin(), color.end(), image.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(cy) * width + static_cast<std::size_t>(cx)) * 3));
      }
  }

  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(size), static_cast<png_uint_32>(size), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < width; ++r) png_write_row(png, image.data() + r * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::ferror(file.get())) throw IoError("write failed for " + path.string());
}

TsneResult emit_tsne_plot(const MatrixXd& shared_latents, const std::vector<int>& labels,
                          const std::filesystem::path& path, const TsneOptions& options) {
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) throw UsageError("t-SNE plot needs at least 2 classes");
  TsneResult result = tsne(shared_latents, labels, options);
  write_scatter_png(result.embedding, result.labels, path);
  return result;
}

}  // namespace mate::eval
