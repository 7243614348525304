#include "bit_reverse.h"

static unsigned rev6(unsigned i) {
  unsigned r = 0;
  for (int b = 0; b < 6; b++) {
#pragma HLS UNROLL
    r = (r << 1) | ((i >> b) & 1);
  }
  return r;
}

void bit_reverse(ap_int<32> samples[64], ap_int<32> reordered[64]) {
#pragma HLS INTERFACE port=samples mode=bram
  for (unsigned i = 0; i < 64; i++) {
#pragma HLS PIPELINE II=1
    reordered[rev6(i)] = samples[i];
  }
}
