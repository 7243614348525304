#include "fft128.h"
#include "fft64_even.h"
#include "fft64_odd.h"
#include "fft_combine.h"

void fft128(const ap_fixed<18,2> x_re[128], const ap_fixed<18,2> x_im[128], ap_fixed<18,2> y_re[128], ap_fixed<18,2> y_im[128]) {
#pragma HLS DATAFLOW
  ap_fixed<18,2> xe_re[64];
  ap_fixed<18,2> xe_im[64];
  ap_fixed<18,2> xo_re[64];
  ap_fixed<18,2> xo_im[64];
  ap_fixed<18,2> e_re[64];
  ap_fixed<18,2> e_im[64];
  ap_fixed<18,2> o_re[64];
  ap_fixed<18,2> o_im[64];
split:
  for (int n = 0; n < 64; n++) {
#pragma HLS PIPELINE II=1
    xe_re[n] = x_re[2 * n];
    xe_im[n] = x_im[2 * n];
    xo_re[n] = x_re[2 * n + 1];
    xo_im[n] = x_im[2 * n + 1];
  }
  fft64_even(xe_re, xe_im, e_re, e_im);
  fft64_odd(xo_re, xo_im, o_re, o_im);
  fft_combine(e_re, e_im, o_re, o_im, y_re, y_im);
}
