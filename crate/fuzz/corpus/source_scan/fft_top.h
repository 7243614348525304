#pragma once
#include <ap_int.h>

void fft_top(ap_int<32> samples[64], ap_int<32> spectrum[64]);
