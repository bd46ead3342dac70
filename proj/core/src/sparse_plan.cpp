#include "mbot/sparse_plan.hpp"

#include "mbot/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mbot {

SparsePlan::SparsePlan(Index rows, Index cols, std::uint64_t dense_cap) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("SparsePlan: negative size");
  if (static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) <= dense_cap) {
    dense_.assign(static_cast<std::size_t>(rows * cols), 0.0);
  }
}

void SparsePlan::add(Index i, Index j, double mass) {
  if (!dense_.empty()) {
    dense_[static_cast<std::size_t>(i * cols_ + j)] += mass;
    return;
  }
  sparse_[static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(cols_) +
          static_cast<std::uint64_t>(j)] += mass;
}

double SparsePlan::at(Index i, Index j) const {
  if (!dense_.empty()) return dense_[static_cast<std::size_t>(i * cols_ + j)];
  const auto it = sparse_.find(static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(cols_) +
                               static_cast<std::uint64_t>(j));
  return it == sparse_.end() ? 0.0 : it->second;
}

void SparsePlan::scale(double factor) {
  for (double& v : dense_) v *= factor;
  for (auto& [key, v] : sparse_) v *= factor;
}

Vector SparsePlan::row_sums() const {
  Vector r = Vector::Zero(rows_);
  for_each([&](Index i, Index, double v) { r(i) += v; });
  return r;
}

Vector SparsePlan::col_sums() const {
  Vector c = Vector::Zero(cols_);
  for_each([&](Index, Index j, double v) { c(j) += v; });
  return c;
}

double SparsePlan::total_mass() const {
  double t = 0.0;
  for_each([&](Index, Index, double v) { t += v; });
  return t;
}

std::size_t SparsePlan::stored_entries() const {
  return dense_.empty() ? sparse_.size() : dense_.size();
}

Matrix SparsePlan::to_dense() const {
  Matrix out = Matrix::Zero(rows_, cols_);
  for_each([&](Index i, Index j, double v) { out(i, j) = v; });
  return out;
}

std::vector<std::pair<std::pair<Index, Index>, double>> SparsePlan::sorted_entries() const {
  std::vector<std::pair<std::pair<Index, Index>, double>> out;
  out.reserve(sparse_.size());
  for (const auto& [key, v] : sparse_) {
    if (v == 0.0) continue;
    const auto c = static_cast<std::uint64_t>(cols_);
    out.push_back({{static_cast<Index>(key / c), static_cast<Index>(key % c)}, v});
  }
  std::sort(out.begin(), out.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  return out;
}

void write_plan_csv(std::ostream& out, const SparsePlan& plan) {
  out << "i,j,mass\n";
  plan.for_each([&](Index i, Index j, double v) {
    out << i << ',' << j << ',' << format_double(v) << '\n';
  });
}

void write_plan_csv(std::ostream& out, const Matrix& plan) {
  out << "i,j,mass\n";
  for (Index i = 0; i < plan.rows(); ++i)
    for (Index j = 0; j < plan.cols(); ++j)
      if (plan(i, j) != 0.0) out << i << ',' << j << ',' << format_double(plan(i, j)) << '\n';
}

namespace {

constexpr std::array<char, 8> kMagic{'M', 'B', 'O', 'T', 'P', 'L', 'A', 'N'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw std::runtime_error("plan file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_plan_binary(std::ostream& out, const Matrix& plan, std::uint32_t flags) {
  if (plan.rows() != plan.cols()) throw std::invalid_argument("binary plan layout is square only");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(plan.rows()));
  put_le<std::uint32_t>(out, flags);
  for (Index i = 0; i < plan.rows(); ++i)
    for (Index j = 0; j < plan.cols(); ++j) put_le<double>(out, plan(i, j));
}

BinaryPlan read_plan_binary(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("not an MBOTPLAN file");
  }
  const auto n = get_le<std::uint32_t>(in);
  BinaryPlan out;
  out.flags = get_le<std::uint32_t>(in);
  out.plan.resize(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) out.plan(i, j) = get_le<double>(in);
  return out;
}

}  // namespace mbot
