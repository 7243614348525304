#pragma once
#include <ap_int.h>

void bit_reverse(ap_int<32> samples[64], ap_int<32> reordered[64]);
