#pragma once

#include "arecon/camera.hpp"
#include "arecon/image.hpp"
#include "arecon/pose.hpp"

namespace arecon {

// One posed RGB-D observation. Invalid depth pixels carry the sentinel 0
// plus a zero entry in `valid`; the mask travels with the frame.
struct Frame {
  ImageRgb image;        // HxWx3 in [0,1]
  Image<double> depth;   // HxWx1, scene units
  ImageMask valid;       // HxWx1, 1 = depth usable
  Pose pose;
  CameraIntrinsics intrinsics;
  int id = 0;

  int validDepthCount() const {
    int n = 0;
    for (auto v : valid.data) n += (v != 0);
    return n;
  }
};

}  // namespace arecon
