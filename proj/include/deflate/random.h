// Copyright 2026 The Deflate Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DEFLATE_RANDOM_H_
#define DEFLATE_RANDOM_H_

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace deflate {

// Seeded, splittable generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard. Gaussians use the Box-Muller transform
// on 53-bit uniforms, so streams do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  // Child generator whose stream is a deterministic function of this
  // generator's (seed, stream) identity and `substream`. Does not advance
  // the parent.
  Rng Split(uint64_t substream) const;

  // Uniform on (0, 1).
  double Uniform();
  double Gaussian();

  // Matrices are filled row-major.
  Eigen::MatrixXd GaussianMatrix(int rows, int cols, double stddev = 1.0);
  Eigen::VectorXd GaussianVector(int size, double stddev = 1.0);

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

 private:
  uint64_t seed_;
  uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace deflate

#endif  // DEFLATE_RANDOM_H_
