#pragma once

#include "model.hpp"

namespace actseg {

struct LengthNormConfig {
    double alpha = 1.0;
    double beta = 0.0; // coverage term weight; 0 disables it
};

// Wu et al. length penalty: lp(len) = ((5 + len) / 6)^alpha.
double length_penalty(int len, double alpha);

struct DecodeResult {
    std::vector<int> ids; // without the trailing eos
    double score = 0.0;   // normalized log-probability of the returned hypothesis
    bool truncated = false;
};

// Argmax per step, feeding back its own previous output. Ties break toward
// the lowest symbol id. Stops at eos or max_len.
DecodeResult greedy_decode(Stepper& stepper, int max_len);

// Standard beam expansion over the per-step distribution. Finished
// hypotheses move to a completed pool scored as logP / lp(len); the search
// stops once the best completed score beats every live hypothesis's
// optimistic bound. Returns the best finished hypothesis, or the best
// unfinished one at max_len with the truncation flag set.
DecodeResult beam_search(Stepper& stepper, int beam, const LengthNormConfig& norm, int max_len);

// Family dispatch: greedy or beam for standard decoders, greedy generation
// via the ACT decoder's own loop otherwise (beam > 1 is rejected there).
std::vector<int> translate_ids(Tape& tape, Model& m, std::span<const int> src_ids, int beam,
                               const LengthNormConfig& norm, int max_len);

std::string translate_line(Model& m, const std::string& line, int beam,
                           const LengthNormConfig& norm, int max_len);

} // namespace actseg
