#include "fft_top.h"
#include "bit_reverse.h"
#include "fft_stage.h"

void fft_top(ap_int<32> samples[64], ap_int<32> spectrum[64]) {
#pragma HLS DATAFLOW
  ap_int<32> reordered[64];
  bit_reverse(samples, reordered);
  fft_stage(reordered, spectrum);
}
