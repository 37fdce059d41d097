#pragma once

#include <mutex>

namespace ideo {

// Seconds since the Unix epoch. Injected wherever time matters so tests can
// drive rate limits, backoff and experiment timers deterministically.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual void sleep_for(double seconds) = 0;
};

class SystemClock final : public Clock {
 public:
  double now() const override;
  void sleep_for(double seconds) override;
};

// Time only moves when sleep_for() or advance() is called.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(double start = 0.0) : now_(start) {}
  double now() const override;
  void sleep_for(double seconds) override;
  void advance(double seconds) { sleep_for(seconds); }
  void set(double t);

 private:
  mutable std::mutex mu_;
  double now_;
};

}  // namespace ideo
