#pragma once

namespace shortcut_lab {

/// Sign convention used everywhere in this library: sign(0) = +1.
inline int sign_pm1(double v) { return v >= 0.0 ? 1 : -1; }

}  // namespace shortcut_lab
