#pragma once

#include <string>

#include "srs/tensor.hpp"

namespace srs {

/// Reads an 8-bit binary PGM (P5) file into a (1, h, w) tensor in [0, 1].
Tensor read_pgm(const std::string& path);

/// Writes a (1, h, w) or (h, w) tensor with values in [0, 1] as binary PGM,
/// quantizing to 8 bits. read_pgm(write_pgm(x)) is the identity when x is
/// already on the 1/255 grid.
void write_pgm(const std::string& path, const Tensor& img);

}  // namespace srs
