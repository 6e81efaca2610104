#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace paraformer {

// Dense matrices are row-major: rows are nodes, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

using FeatureMatrix = Matrix;

// All deterministic randomness goes through this engine.
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimension disagreement between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values, non-stochastic inputs and similar numeric contract violations.
class NumericError : public Error {
public:
    using Error::Error;
};

// Bad argument values (out of range parameters, empty sets, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

void require_shape(bool ok, const std::string& what);

bool all_finite(const Matrix& m);

// Uniform(-bound, bound) matrix.
Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng);

// Standard normal matrix scaled by `stddev`.
Matrix normal_matrix(Index rows, Index cols, double stddev, Rng& rng);

// Random row-stochastic matrix with strictly positive entries.
Matrix random_stochastic(Index n, Rng& rng);

// Keeps freed blocks in the heap instead of returning them to the OS; the
// training loop allocates and frees many same-sized matrices per step.
void configure_allocator();

// Shortest decimal text that parses back to exactly `x`.
std::string format_number(double x);

}  // namespace paraformer
