#pragma once

#include "facemat/core/rng.hpp"
#include "facemat/core/types.hpp"
#include "facemat/synth/config.hpp"

namespace facemat::synth {

/// Filled closed region bounded by a closed Catmull-Rom curve through 4-10
/// random control points. Binary.
AlphaMatte gen_random_shape(Rng& rng, int height, int width);

struct ProceduralFace {
  ImageFrame image;
  /// Exact binary skin mask: face ellipse minus hair, ears excluded.
  AlphaMatte skin;
};

/// Skin-tone ellipse with eyes, brows, nose and mouth over a random gradient
/// background; hair and ears are drawn but excluded from the skin mask.
ProceduralFace gen_procedural_face(Rng& rng, int size);

/// Band-limited colour texture in [0,1].
ImageFrame gen_texture(Rng& rng, int height, int width);

/// Procedural stand-ins for asset datasets: binary hand-like masks and soft
/// strand mattes.
OcclusionAsset builtin_asset(OcclusionSource source, Rng& rng, int canvas);

/// Brightness/contrast/saturation jitter with magnitudes drawn from the
/// config ranges; zero ranges leave the image untouched.
ImageFrame color_jitter(const ImageFrame& img, Rng& rng, const SynthConfig& cfg);

/// Area of a matte as a fraction of its raster.
double area_fraction(const Field& alpha);

}  // namespace facemat::synth
