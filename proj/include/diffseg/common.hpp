#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace diffseg {

// Error categories used across the pipeline. CLI maps them to exit codes.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct model_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct train_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw input_error(msg);
}

inline void require_config(bool cond, const std::string& msg) {
    if (!cond) throw config_error(msg);
}

inline bool is_finite(float v) { return std::isfinite(v); }
inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace diffseg
