#pragma once

// Shared hand-checked fixtures. The two-opinion nesting sentence is the
// canonical worked example used across the encoding and evaluation tests:
// a positive opinion whose target contains a nested negative opinion.
//
//   "Nowadays I actually enjoy the bad acting."
//    0        9 11       20    26  30  34
//
// Opinion 1: holder "I", expression "enjoy", target "the bad acting." (Positive)
// Opinion 2: no holder, expression "bad", target "acting." (Negative)

#include <string>

#include "sentgraph/data.hpp"

namespace fixtures {

inline std::string nesting_sentence_json() {
  return R"([
  {
    "sent_id": "ex-nesting-01",
    "text": "Nowadays I actually enjoy the bad acting.",
    "opinions": [
      {
        "Source": [["I"], ["9:10"]],
        "Target": [["the bad acting."], ["26:41"]],
        "Polar_expression": [["enjoy"], ["20:25"]],
        "Polarity": "Positive"
      },
      {
        "Source": [[], []],
        "Target": [["acting."], ["34:41"]],
        "Polar_expression": [["bad"], ["30:33"]],
        "Polarity": "Negative"
      }
    ]
  }
])";
}

inline sentgraph::Dataset nesting_dataset() {
  return sentgraph::parse_dataset(nesting_sentence_json());
}

inline sentgraph::SentimentGraph nesting_graph() { return nesting_dataset().at(0); }

}  // namespace fixtures
