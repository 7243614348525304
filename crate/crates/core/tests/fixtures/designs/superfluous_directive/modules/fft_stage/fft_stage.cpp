#include "fft_stage.h"

void fft_stage(ap_int<32> reordered[64], ap_int<32> spectrum[64]) {
#pragma HLS ARRAY_PARTITION variable=twiddles cyclic factor=2
  for (int i = 0; i < 64; i += 2) {
#pragma HLS PIPELINE II=1
    ap_int<32> a = reordered[i];
    ap_int<32> b = reordered[i + 1];
    spectrum[i] = a + b;
    spectrum[i + 1] = a - b;
  }
}
