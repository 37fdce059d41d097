#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ideoscale/corpus.hpp"

// Generators for synthetic response matrices with known latent structure.
// Used by the test suites and the bundled demo fixtures.
namespace ideo::synthetic {

struct Generated {
  ResponseMatrix matrix;
  Eigen::MatrixXd truth;  // actors x latent dims, aligned with matrix rows
};

// Spatial roll calls from the Gaussian-utility logit model. Actors uniform in
// the unit disk; group "Democrat" when the first coordinate is negative.
Generated spatial(std::size_t n_actors, std::size_t n_items, int dims, double beta, std::vector<double> dim_weights,
                  std::uint64_t seed);

// Two blocs voting against each other on every item; item orientation
// alternates so no actor's codes are constant.
ResponseMatrix polarized_blocs(std::size_t per_bloc, std::size_t n_items);

// One latent trait, logistic link: P(+1) = logistic(a_j (theta_i - b_j)).
Generated latent_logistic(std::size_t n_actors, std::size_t n_items, std::uint64_t seed);

// Draws from the probit 2PL prior itself: theta_i ~ N(mu_i, 1) with mu = -1
// for actor 0, +1 for actor 1 and 0 otherwise; (a_j, b_j) ~ N(0, item_sd^2).
Generated irt_probit(std::size_t n_actors, std::size_t n_items, double item_sd, std::uint64_t seed);

// Survey-style matrix with eight topics, partisan groups on the CES seven
// point scale and demographic tags. Actor ids are prefixed "ces:".
Generated survey(std::size_t n_respondents, std::size_t n_items, std::uint64_t seed);

}  // namespace ideo::synthetic
