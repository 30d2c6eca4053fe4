#pragma once

#include <chrono>
#include <map>
#include <string>

namespace rfkk {

/// Wall-clock seconds spent per processing step. Step names are the ones
/// used in reports: "svd", "kk", "pec", "sec", "reconstruct", "regress",
/// "train".
class StepTimes {
public:
    void add(const std::string& step, double seconds) { seconds_[step] += seconds; }
    double get(const std::string& step) const {
        auto it = seconds_.find(step);
        return it == seconds_.end() ? 0.0 : it->second;
    }
    double total() const {
        double t = 0.0;
        for (const auto& [_, s] : seconds_) t += s;
        return t;
    }
    const std::map<std::string, double>& steps() const { return seconds_; }
    void merge(const StepTimes& other) {
        for (const auto& [k, v] : other.seconds_) seconds_[k] += v;
    }

private:
    std::map<std::string, double> seconds_;
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - start_).count();
        start_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace rfkk
