#include "dst/synthdata.hpp"

#include <stdexcept>

#include "dst/rng.hpp"

namespace dst::synth {

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "unknown";
}

std::uint64_t split_base(Split split) { return static_cast<std::uint64_t>(split) << 40; }

Sample generate_sample(std::uint64_t seed, std::uint64_t index) {
    Rng rng(mix_seed(seed, index));
    Sample s;
    s.type = rng.below(2) == 0 ? QuestionType::AskColorOfShape : QuestionType::AskShapeOfColor;
    const int key = static_cast<int>(rng.below(4));
    const std::size_t target = static_cast<std::size_t>(rng.below(kRegions));

    // The keyed attribute appears on the target region only; the other
    // attribute is free everywhere.
    for (std::size_t r = 0; r < kRegions; ++r) {
        int keyed = key;
        if (r != target) {
            keyed = static_cast<int>(rng.below(3));
            if (keyed >= key) {
                keyed += 1;
            }
        }
        const int free_attr = static_cast<int>(rng.below(4));
        if (s.type == QuestionType::AskColorOfShape) {
            s.shapes[r] = keyed;
            s.colors[r] = free_attr;
        } else {
            s.colors[r] = keyed;
            s.shapes[r] = free_attr;
        }
    }

    for (std::size_t r = 0; r < kRegions; ++r) {
        double* f = s.regions.data() + r * kFeatureDim;
        f[static_cast<std::size_t>(s.colors[r])] = 1.0;
        f[kColors + static_cast<std::size_t>(s.shapes[r])] = 1.0;
        for (std::size_t j = 0; j < kNoiseDims; ++j) {
            f[kColors + kShapes + j] = rng.uniform(-kNoiseAmplitude, kNoiseAmplitude);
        }
    }

    s.question.fill(kPad);
    if (s.type == QuestionType::AskColorOfShape) {
        s.question[0] = kAskColor;
        s.question[1] = kShapeToken0 + key;
        s.answer = s.colors[target];
    } else {
        s.question[0] = kAskShape;
        s.question[1] = kColorToken0 + key;
        s.answer = static_cast<int>(kColors) + s.shapes[target];
    }
    return s;
}

std::vector<Sample> generate_dataset(std::uint64_t seed, std::size_t size, Split split) {
    std::vector<Sample> out;
    out.reserve(size);
    const std::uint64_t base = split_base(split);
    for (std::size_t i = 0; i < size; ++i) {
        out.push_back(generate_sample(seed, base + i));
    }
    return out;
}

int derive_answer(const Sample& s) {
    const int key_token = s.question[1];
    int found = -1;
    for (std::size_t r = 0; r < kRegions; ++r) {
        const bool match = s.question[0] == kAskColor ? s.shapes[r] == key_token - kShapeToken0
                                                      : s.colors[r] == key_token - kColorToken0;
        if (match) {
            if (found >= 0) {
                throw std::logic_error("derive_answer: keyed value occurs more than once");
            }
            found = static_cast<int>(r);
        }
    }
    if (found < 0) {
        throw std::logic_error("derive_answer: keyed value missing");
    }
    const auto r = static_cast<std::size_t>(found);
    return s.question[0] == kAskColor ? s.colors[r] : static_cast<int>(kColors) + s.shapes[r];
}

}  // namespace dst::synth
