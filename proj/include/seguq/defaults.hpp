#pragma once

#include <array>
#include <cstddef>

namespace seguq::defaults {

// Stochastic inference.
inline constexpr std::size_t kSamples = 10;
inline constexpr std::size_t kEnsembleDrawsPerMember = 1;

// Segmentation evaluation.
inline constexpr double kBinarizeThreshold = 0.5;
inline constexpr int kConnectivity = 26;
inline constexpr std::size_t kModelRuns = 6;

// Patchwise uncertainty metrics.
inline constexpr std::size_t kPatchSize = 4;
inline constexpr double kPatchAccuracy = 0.8;
inline constexpr double kReferenceUeo = 0.4;

// Missing-lesion rule: undetected if fewer than min(50% of voxels, 5) are uncertain.
inline constexpr double kUndetectedFraction = 0.5;
inline constexpr double kUndetectedVoxels = 5.0;

// Ring features.
inline constexpr std::array<double, 3> kRingEdgesMm = {5.0, 10.0, 15.0};
inline constexpr double kFeatureThreshold = 0.2;
inline constexpr std::array<double, 3> kFeatureThresholdSweep = {0.1, 0.2, 0.3};
inline constexpr double kClipPercentile = 95.0;

// Classification.
inline constexpr std::size_t kFazekasFeatures = 18;
inline constexpr std::size_t kFazekasKMin = 10;
inline constexpr std::size_t kFazekasKMax = 26;
inline constexpr std::size_t kQcFeatures = 9;
inline constexpr std::size_t kQcKMin = 6;
inline constexpr std::size_t kQcKMax = 12;
inline constexpr double kRegularization = 10.0;
inline constexpr double kQcDiceCutoff = 0.57;
inline constexpr std::size_t kBootstrapSplits = 1000;
inline constexpr double kTrainFraction = 0.75;
inline constexpr double kConfidenceLevel = 0.95;

// Training objectives.
inline constexpr double kEvidentialKlWeight = 0.05;
inline constexpr double kElboBeta = 1.0;
inline constexpr double kComboXentWeight = 0.5;
inline constexpr double kComboDiceWeight = 0.5;
inline constexpr double kSoftDiceEpsilon = 1e-7;

}  // namespace seguq::defaults
