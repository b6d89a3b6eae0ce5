#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "erpf/image.hpp"

namespace erpf::codec {

// Quantizer step 2^((qp-4)/6).
double qstep(int qp);

// Quadtree depth per 8x8 cell, row-major over the (padded) frame.
// Depth d covers an aligned (8 >> d)-cell square inside its 64x64 CTU.
struct CUDepthMap {
  int cells_w = 0;
  int cells_h = 0;
  std::vector<uint8_t> depth;

  uint8_t at(int cx, int cy) const {
    return depth[size_t(cy) * cells_w + cx];
  }
};

bool quadtree_valid(const CUDepthMap& map);

void write_depth_map(const std::string& path, const CUDepthMap& map);
CUDepthMap read_depth_map(const std::string& path);

struct CodecResult {
  LumaFrame recon;       // same dimensions as the input frame
  CUDepthMap depth_map;  // covers the padded frame
  int64_t estimated_bits = 0;
  int qp = 0;
};

struct EncoderConfig {
  double split_tau = 4.0;  // split when CU variance exceeds tau * qstep
};

// Block-DCT intra encoder: variance-driven quadtree partition, DC prediction
// from reconstructed neighbors, uniform quantization of orthonormal DCT
// coefficients, Exp-Golomb length proxy for the rate.
CodecResult encode_intra(const LumaFrame& frame, int qp,
                         const EncoderConfig& cfg = {});

// Boundary smoothing across leaf-CU edges: when the step |p0-q0| is below
// beta(qp) = qstep(qp) the two boundary samples are replaced by
// round((p1 + 2*p0 + 2*q0 + q1) / 6).
LumaFrame deblock(const LumaFrame& frame, const CUDepthMap& map, int qp);

// Orthonormal 2D DCT-II and inverse on N x N blocks, N in {8, 16, 32, 64}.
void dct2(const double* in, double* out, int n);
void idct2(const double* in, double* out, int n);

// Bit length of the signed Exp-Golomb code for a quantized level.
int eg_signed_len(int64_t level);

}  // namespace erpf::codec
