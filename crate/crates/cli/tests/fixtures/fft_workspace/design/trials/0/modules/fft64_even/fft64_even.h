#pragma once
#include <ap_fixed.h>

// 64-point radix-2 FFT; outputs are scaled by 1/64.
void fft64_even(const ap_fixed<18,2> x_even_re[64], const ap_fixed<18,2> x_even_im[64], ap_fixed<18,2> even_re[64], ap_fixed<18,2> even_im[64]);
