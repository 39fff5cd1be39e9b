// Copyright 2026 recite-ctc contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recite {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RECITE_DEFINE_ERROR(NAME)       \
  class NAME : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

// text codec
RECITE_DEFINE_ERROR(IndexOutOfRange)
RECITE_DEFINE_ERROR(BadAlphabet)

// audio frontend
RECITE_DEFINE_ERROR(CorruptHeader)
RECITE_DEFINE_ERROR(UnsupportedFormat)
RECITE_DEFINE_ERROR(SignalTooShort)

// network / trainer
RECITE_DEFINE_ERROR(ShapeMismatch)
RECITE_DEFINE_ERROR(MissingCache)
RECITE_DEFINE_ERROR(InconsistentBins)
RECITE_DEFINE_ERROR(DivergedLoss)

// ctc
RECITE_DEFINE_ERROR(BlankInLabels)
RECITE_DEFINE_ERROR(EmptyPosterior)
RECITE_DEFINE_ERROR(TooLarge)

// metrics
RECITE_DEFINE_ERROR(EmptyReference)

// data ingest
RECITE_DEFINE_ERROR(MissingTranscripts)
RECITE_DEFINE_ERROR(EmptyDataset)
RECITE_DEFINE_ERROR(BadRatios)

// cli / checkpoint
RECITE_DEFINE_ERROR(AlphabetMismatch)
RECITE_DEFINE_ERROR(IdMismatch)
RECITE_DEFINE_ERROR(BadCheckpoint)
RECITE_DEFINE_ERROR(BadConfig)

#undef RECITE_DEFINE_ERROR

/// A code point in the input text that the alphabet does not cover.
/// Carries the offending position (in code points) and the code point itself.
class OutOfAlphabet : public Error {
 public:
  OutOfAlphabet(const std::string& msg, std::size_t position, char32_t code_point)
      : Error(msg), position(position), code_point(code_point) {}

  std::size_t position;
  char32_t code_point;
};

/// Raised when a CTC target admits no frame alignment (target longer than
/// the available output frames, counting repeat separators).
class NoValidAlignment : public Error {
 public:
  using Error::Error;
  NoValidAlignment(const std::string& msg, std::string utterance_id)
      : Error(msg), utterance_id(std::move(utterance_id)) {}

  std::string utterance_id;
};

}  // namespace recite
