#pragma once

#include "hdrfield/synth_scene.hpp"

namespace hdrfield {

// Reference scene: 64x64, 30 frames, 3-exposure cycle (0.25/1/4), one bright
// emitter saturating at mid+high, one dark emitter underexposed at low+mid,
// one translating sphere, gamma-2.2 ground-truth CRF.
SceneSpec blinker_scene();

// Saturation-heavy variant: a large emitter that only the low exposure can
// see unsaturated, used for the generative-prior experiments.
SceneSpec flare_scene();

// Small scene (16x16, 6 frames) for fast unit tests.
SceneSpec mini_scene();

SceneSpec preset_scene(const std::string& name);

}  // namespace hdrfield
