#include "ideoscale/clock.hpp"

#include <chrono>
#include <thread>

namespace ideo {

double SystemClock::now() const {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double VirtualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep_for(double seconds) {
  std::lock_guard lock(mu_);
  if (seconds > 0) now_ += seconds;
}

void VirtualClock::set(double t) {
  std::lock_guard lock(mu_);
  now_ = t;
}

}  // namespace ideo
