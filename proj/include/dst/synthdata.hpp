#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dst::synth {

// Attribute-lookup QA over a small scene of regions. A question names one
// attribute value (a shape or a color) that exactly one region carries and asks
// for that region's other attribute.

inline constexpr std::size_t kRegions = 6;
inline constexpr std::size_t kColors = 4;
inline constexpr std::size_t kShapes = 4;
inline constexpr std::size_t kNoiseDims = 8;
inline constexpr std::size_t kFeatureDim = kColors + kShapes + kNoiseDims;  // 16
inline constexpr std::size_t kQuestionLen = 8;
inline constexpr std::size_t kVocab = 32;
inline constexpr std::size_t kAnswers = kColors + kShapes;  // colors 0..3, shapes 4..7
inline constexpr double kNoiseAmplitude = 0.1;

// Token ids.
inline constexpr int kAskColor = 0;  // "what color is the <shape>?"
inline constexpr int kAskShape = 1;  // "what shape is the <color> one?"
inline constexpr int kColorToken0 = 2;
inline constexpr int kShapeToken0 = 6;
inline constexpr int kPad = 10;

enum class QuestionType : std::uint8_t { AskColorOfShape = 0, AskShapeOfColor = 1 };

struct Sample {
    std::array<double, kRegions * kFeatureDim> regions{};
    std::array<int, kQuestionLen> question{};
    int answer = 0;
    QuestionType type = QuestionType::AskColorOfShape;
    std::array<int, kRegions> colors{};
    std::array<int, kRegions> shapes{};
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

const char* split_name(Split split);

// Deterministic in (seed, index).
Sample generate_sample(std::uint64_t seed, std::uint64_t index);
// Indices [base(split), base(split) + size); bases are 2^40 apart so splits
// never share an index.
std::vector<Sample> generate_dataset(std::uint64_t seed, std::size_t size, Split split);
std::uint64_t split_base(Split split);

// Re-derives the answer from the latent attributes alone.
int derive_answer(const Sample& s);

}  // namespace dst::synth
