#pragma once

#include "merit/graph.hpp"
#include "merit/rng.hpp"

namespace merit {

/// Stochastic block model with Gaussian features whose mean depends on the
/// block. Block labels are assigned in shuffled order so any contiguous node
/// window mixes both classes.
struct BlockGraphConfig {
    std::size_t num_nodes = 200;
    std::size_t num_blocks = 2;
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t feature_dim = 32;
    std::size_t informative_dims = 0;  // leading columns carrying block means; 0 = all
    double signal = 1.0;          // scale of the block means
    double noise = 1.0;           // noise standard deviation on informative columns
    double nuisance_noise = 1.0;  // noise standard deviation on the remaining columns
};

Graph make_block_graph(const BlockGraphConfig& cfg, Rng& rng);

}  // namespace merit
