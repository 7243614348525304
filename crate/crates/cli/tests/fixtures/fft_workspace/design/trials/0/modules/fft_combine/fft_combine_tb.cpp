#include "fft_combine.h"
#include <cmath>
#include <cstdio>

int main() {
  ap_fixed<18,2> e_re[64];
  ap_fixed<18,2> e_im[64];
  ap_fixed<18,2> o_re[64];
  ap_fixed<18,2> o_im[64];
  ap_fixed<18,2> out_re[128];
  ap_fixed<18,2> out_im[128];
  for (int k = 0; k < 64; k++) {
    e_re[k] = 0.5;
    e_im[k] = 0.0;
    o_re[k] = 0.0;
    o_im[k] = 0.5;
  }
  fft_combine(e_re, e_im, o_re, o_im, out_re, out_im);
  int errors = 0;
  for (int k = 0; k < 64; k++) {
    double a = -2.0 * M_PI * k / 128.0;
    double tr = -0.5 * std::sin(a), ti = 0.5 * std::cos(a);
    if (std::fabs(out_re[k].to_double() - (0.5 + tr) / 2) > 1e-3 || std::fabs(out_im[k].to_double() - ti / 2) > 1e-3) {
      errors++;
    }
  }
  std::printf("fft_combine: %d mismatches\n", errors);
  return errors != 0;
}
