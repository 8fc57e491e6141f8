#pragma once

// Frozen output of tests/oracles/block_oracle.py. Identity projections,
// n = 2, unit MLP, gain 1, bias 0.
namespace mlkg::testing::oracle {

// Intra block over entities a = (0.3, -0.7), b = (0.9, 0.2) joined by one
// OO edge, q = (0.5, 1.5). Row i lists (self, other).
inline constexpr double kIntraAlpha[2][2] = {{1.0, 0.1851483698661627}, {1.0, 0.1851483698661627}};
inline constexpr double kIntraBeta[2][2] = {{-0.74740931868365956, -0.072975638311577926},
                                            {0.51449575542752646, -0.072975638311577926}};
inline constexpr double kIntraAttn[2][2] = {{0.53504692075804439, 0.46495307924195561},
                                            {0.80255225860953117, 0.19744774139046886}};
inline constexpr double kIntraOut[2][2] = {{0.99999422222917633, 0.0}, {0.99999060766001302, 0.0}};

// Inter blocks on one entity e = (0.4, 0.1), chunk c = (-0.2, 0.8),
// document d = (0.7, -0.5), q = (1.0, -0.3).
inline constexpr double kChunkGamma[2] = {-0.51107539287714987, -0.07272359309731849};
inline constexpr double kChunkAttn[2] = {0.39213377237265384, 0.6078662276273461};
inline constexpr double kChunkOut[2] = {0.0, 0.9999863349045589};
inline constexpr double kDocGamma[3] = {0.94643287386164388, 0.99835799028012884, 0.67348999618370353};
inline constexpr double kDocAttn[3] = {0.35531133770182027, 0.37424831807130426, 0.27044034422687535};
inline constexpr double kDocOut[2] = {0.99999072211631712, 0.0};

// One full layer on the same graph and inputs.
inline constexpr double kLayerEntity[2] = {0.99994444907364566, 0.0};
inline constexpr double kLayerChunk[2] = {0.0, 0.99995066883968065};
inline constexpr double kLayerDocument[2] = {0.99999350925677399, 0.0};

// Retrieval: unit inputs e = (0.6, 0.8), c = (-0.28, 0.96), d = (0.8, -0.6),
// q = (1, -0.3), one layer, then cos(q, h_d).
inline constexpr double kRetrievalScore = 0.95782628522115143;

}  // namespace mlkg::testing::oracle
