#pragma once

#include "gcmr/classifier.hpp"
#include "gcmr/encoder.hpp"
#include "gcmr/memory.hpp"

namespace gcmr {

// Everything the protocol carries from one session to the next.
struct SessionState {
    int session = 0;
    EncoderParams encoder;  // frozen after session 0
    DecoderParams decoder;
    ClassifierParams classifier;
    RepresentationMemory memory;
    WeightMemory weight_memory;

    friend bool operator==(const SessionState&, const SessionState&) = default;
};

}  // namespace gcmr
