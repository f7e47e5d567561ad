#pragma once

#include <functional>
#include <string>

#include "ntk/common.hpp"

namespace ntk {

// Uniform tokenizer-as-function view. Every tokenizer in the toolkit
// (statistical teachers, the neural tagger, the vocabulary-restricted
// variant) can be wrapped as one of these for evaluation and distillation.
using SegmentFn = std::function<Segmentation(const std::u32string&)>;

}  // namespace ntk
