#pragma once

#include "structfusion/fusion.hpp"

#include <iosfwd>

namespace structfusion {

/// Line-based REPL over one dialog. Each user line is delexicalised against
/// the database, the belief comes from the model's NLU when it predicts one
/// and from a "slots>" prompt otherwise (domain-slot=value items, blank
/// keeps the previous state). ":reset" starts a new dialog, ":quit" or end
/// of input ends the session. Returns the exit code.
int run_chat(ResponseModel& model, const DialogCorpus& corpus, const EntityDatabase& database, std::istream& in,
             std::ostream& out, int max_len = 50);

/// Throws CheckpointError when the model does not fit the corpus.
void check_model_fits(const ResponseModel& model, const DialogCorpus& corpus);

}  // namespace structfusion
