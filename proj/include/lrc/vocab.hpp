#pragma once

namespace lrc {

// Reserved token ids shared by the encoder and the task generators.
inline constexpr int kPadToken = 0;
inline constexpr int kSepToken = 1;
inline constexpr int kClsToken = 2;
inline constexpr int kFirstContentToken = 3;

}  // namespace lrc
