#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace maml {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

// Row-major so that an embedding row is a contiguous f-vector.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Every random draw in the library goes through this engine type.
using Rng = std::mt19937_64;

struct Interaction {
  UserIndex user;
  ItemIndex item;

  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

}  // namespace maml
