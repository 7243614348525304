#include "fft_combine.h"

// W_128^k for k = 0..63.
static const ap_fixed<18,2> fft_combine_tw_re[64] = {
    1.00000000, 0.99879546, 0.99518473, 0.98917651,
    0.98078528, 0.97003125, 0.95694034, 0.94154407,
    0.92387953, 0.90398929, 0.88192126, 0.85772861,
    0.83146961, 0.80320753, 0.77301045, 0.74095113,
    0.70710678, 0.67155895, 0.63439328, 0.59569930,
    0.55557023, 0.51410274, 0.47139674, 0.42755509,
    0.38268343, 0.33688985, 0.29028468, 0.24298018,
    0.19509032, 0.14673047, 0.09801714, 0.04906767,
    0.00000000, -0.04906767, -0.09801714, -0.14673047,
    -0.19509032, -0.24298018, -0.29028468, -0.33688985,
    -0.38268343, -0.42755509, -0.47139674, -0.51410274,
    -0.55557023, -0.59569930, -0.63439328, -0.67155895,
    -0.70710678, -0.74095113, -0.77301045, -0.80320753,
    -0.83146961, -0.85772861, -0.88192126, -0.90398929,
    -0.92387953, -0.94154407, -0.95694034, -0.97003125,
    -0.98078528, -0.98917651, -0.99518473, -0.99879546,
};
static const ap_fixed<18,2> fft_combine_tw_im[64] = {
    -0.00000000, -0.04906767, -0.09801714, -0.14673047,
    -0.19509032, -0.24298018, -0.29028468, -0.33688985,
    -0.38268343, -0.42755509, -0.47139674, -0.51410274,
    -0.55557023, -0.59569930, -0.63439328, -0.67155895,
    -0.70710678, -0.74095113, -0.77301045, -0.80320753,
    -0.83146961, -0.85772861, -0.88192126, -0.90398929,
    -0.92387953, -0.94154407, -0.95694034, -0.97003125,
    -0.98078528, -0.98917651, -0.99518473, -0.99879546,
    -1.00000000, -0.99879546, -0.99518473, -0.98917651,
    -0.98078528, -0.97003125, -0.95694034, -0.94154407,
    -0.92387953, -0.90398929, -0.88192126, -0.85772861,
    -0.83146961, -0.80320753, -0.77301045, -0.74095113,
    -0.70710678, -0.67155895, -0.63439328, -0.59569930,
    -0.55557023, -0.51410274, -0.47139674, -0.42755509,
    -0.38268343, -0.33688985, -0.29028468, -0.24298018,
    -0.19509032, -0.14673047, -0.09801714, -0.04906767,
};

void fft_combine(const ap_fixed<18,2> even_re[64], const ap_fixed<18,2> even_im[64], const ap_fixed<18,2> odd_re[64], const ap_fixed<18,2> odd_im[64], ap_fixed<18,2> y_re[128], ap_fixed<18,2> y_im[128]) {
combine:
  for (int k = 0; k < 64; k++) {
#pragma HLS PIPELINE II=1
    ap_fixed<18,2> tr = odd_re[k] * fft_combine_tw_re[k] - odd_im[k] * fft_combine_tw_im[k];
    ap_fixed<18,2> ti = odd_re[k] * fft_combine_tw_im[k] + odd_im[k] * fft_combine_tw_re[k];
    y_re[k] = (even_re[k] + tr) >> 1;
    y_im[k] = (even_im[k] + ti) >> 1;
    y_re[k + 64] = (even_re[k] - tr) >> 1;
    y_im[k + 64] = (even_im[k] - ti) >> 1;
  }
}
