#pragma once
#include <ap_int.h>

void fft_stage(ap_int<32> reordered[64], ap_int<32> spectrum[64]);
