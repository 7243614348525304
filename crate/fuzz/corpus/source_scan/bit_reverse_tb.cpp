#include "bit_reverse.h"
#include <cstdio>

int main() {
  ap_int<32> in[64], out[64];
  for (int i = 0; i < 64; i++) in[i] = i;
  bit_reverse(in, out);
  if (out[1] != 32) { std::printf("mismatch\n"); return 1; }
  return 0;
}
