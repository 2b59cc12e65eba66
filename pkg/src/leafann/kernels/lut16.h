/* Blocked LUT16 distance kernels over 32-point blocks of interleaved 4-bit codes.
 *
 * Block bytes: subspace pair g owns bytes [32g, 32g+32); byte 2t+s holds
 * subspace 2g+s of points 2t (low nibble) and 2t+1 (high nibble).
 * Tables: m rows of 16 uint8 entries, contiguous.
 * Output: 32 uint16 sums in layout order, position p holding slot
 * (p odd ? 16 + p/2 : p/2); slots >= valid are set to 0xFFFF.
 * All sums wrap modulo 2^16 identically on every path.
 */
#ifndef LEAFANN_LUT16_H
#define LEAFANN_LUT16_H

#include <stdint.h>
#include <string.h>

#if defined(__x86_64__) || defined(__i386__)
#define LEAFANN_X86 1
#include <immintrin.h>
#endif

static inline int lut16_slot_of(int p) { return (p & 1) ? 16 + (p >> 1) : (p >> 1); }

static inline void lut16_finish(const uint16_t *acc, int valid, uint16_t *out)
{
    for (int p = 0; p < 32; ++p) {
        int slot = lut16_slot_of(p);
        out[p] = slot < valid ? acc[slot] : (uint16_t)0xFFFF;
    }
}

/* Reference: one nibble at a time. */
static void lut16_scalar(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out)
{
    uint16_t acc[32];
    memset(acc, 0, sizeof(acc));
    for (int j = 0; j < m; ++j) {
        const uint8_t *row = lut + 16 * j;
        const uint8_t *grp = codes + 32 * (j >> 1) + (j & 1);
        for (int t = 0; t < 32; ++t) {
            uint8_t b = grp[2 * (t >> 1)];
            uint8_t nib = (t & 1) ? (uint8_t)(b >> 4) : (uint8_t)(b & 0x0F);
            acc[t] = (uint16_t)(acc[t] + row[nib]);
        }
    }
    lut16_finish(acc, valid, out);
}

/* Portable pass-structured variant: a 32-entry table (two LUTs) per pair,
 * byte parity selects the half, `pairs_per_pass` pairs per loop trip. */
static void lut16_portable(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out, int pairs_per_pass)
{
    uint16_t lo[32], hi[32], acc[32];
    memset(lo, 0, sizeof(lo));
    memset(hi, 0, sizeof(hi));
    int npairs = m >> 1;
    int g = 0;
    for (; g + pairs_per_pass <= npairs; g += pairs_per_pass) {
        for (int u = 0; u < pairs_per_pass; ++u) {
            const uint8_t *tab = lut + 32 * (g + u);
            const uint8_t *by = codes + 32 * (g + u);
            for (int i = 0; i < 32; ++i) {
                int half = (i & 1) << 4;
                lo[i] = (uint16_t)(lo[i] + tab[half + (by[i] & 0x0F)]);
                hi[i] = (uint16_t)(hi[i] + tab[half + (by[i] >> 4)]);
            }
        }
    }
    for (; g < npairs; ++g) {
        const uint8_t *tab = lut + 32 * g;
        const uint8_t *by = codes + 32 * g;
        for (int i = 0; i < 32; ++i) {
            int half = (i & 1) << 4;
            lo[i] = (uint16_t)(lo[i] + tab[half + (by[i] & 0x0F)]);
            hi[i] = (uint16_t)(hi[i] + tab[half + (by[i] >> 4)]);
        }
    }
    for (int t = 0; t < 16; ++t) {
        acc[2 * t] = (uint16_t)(lo[2 * t] + lo[2 * t + 1]);
        acc[2 * t + 1] = (uint16_t)(hi[2 * t] + hi[2 * t + 1]);
    }
    lut16_finish(acc, valid, out);
}

#ifdef LEAFANN_X86

static int lut16_has_ssse3(void) { return __builtin_cpu_supports("ssse3"); }
static int lut16_has_avx2(void) { return __builtin_cpu_supports("avx2"); }

/* Even/odd sums of one 16-byte half, as in `lut16_portable` but in-register:
 * a shuffle on each LUT with the other parity's indices forced to zero. */
__attribute__((target("ssse3")))
static inline void lut16_half_ssse3(__m128i t0, __m128i t1, __m128i by, __m128i *even, __m128i *odd)
{
    const __m128i nib = _mm_set1_epi8(0x0F);
    const __m128i odd_flag = _mm_set1_epi16((short)0x8000);  /* 0x80 on odd bytes */
    const __m128i even_flag = _mm_set1_epi16(0x0080);        /* 0x80 on even bytes */
    const __m128i ones = _mm_set1_epi8(1);
    __m128i il = _mm_and_si128(by, nib);
    __m128i ih = _mm_and_si128(_mm_srli_epi16(by, 4), nib);
    __m128i rl = _mm_or_si128(_mm_shuffle_epi8(t0, _mm_or_si128(il, odd_flag)),
                              _mm_shuffle_epi8(t1, _mm_or_si128(il, even_flag)));
    __m128i rh = _mm_or_si128(_mm_shuffle_epi8(t0, _mm_or_si128(ih, odd_flag)),
                              _mm_shuffle_epi8(t1, _mm_or_si128(ih, even_flag)));
    *even = _mm_add_epi16(*even, _mm_maddubs_epi16(rl, ones));
    *odd = _mm_add_epi16(*odd, _mm_maddubs_epi16(rh, ones));
}

__attribute__((target("ssse3")))
static inline void lut16_store_layout(__m128i e0, __m128i o0, __m128i e1, __m128i o1, int valid, uint16_t *out)
{
    /* e0 = slots 0,2..14  o0 = 1,3..15  e1 = 16,18..30  o1 = 17..31 */
    __m128i a = _mm_unpacklo_epi16(e0, o0);  /* 0..7 */
    __m128i b = _mm_unpackhi_epi16(e0, o0);  /* 8..15 */
    __m128i c = _mm_unpacklo_epi16(e1, o1);  /* 16..23 */
    __m128i d = _mm_unpackhi_epi16(e1, o1);  /* 24..31 */
    _mm_storeu_si128((__m128i *)(out + 0), _mm_unpacklo_epi16(a, c));
    _mm_storeu_si128((__m128i *)(out + 8), _mm_unpackhi_epi16(a, c));
    _mm_storeu_si128((__m128i *)(out + 16), _mm_unpacklo_epi16(b, d));
    _mm_storeu_si128((__m128i *)(out + 24), _mm_unpackhi_epi16(b, d));
    if (valid < 32) {
        for (int p = 0; p < 32; ++p)
            if (lut16_slot_of(p) >= valid) out[p] = 0xFFFF;
    }
}

/* Two 128-bit tables concatenated as one 256-bit virtual table: one subspace pair per pass. */
__attribute__((target("ssse3")))
static void lut16_ssse3_2(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out)
{
    __m128i e0 = _mm_setzero_si128(), o0 = e0, e1 = e0, o1 = e0;
    int npairs = m >> 1;
    for (int g = 0; g < npairs; ++g) {
        __m128i t0 = _mm_loadu_si128((const __m128i *)(lut + 32 * g));
        __m128i t1 = _mm_loadu_si128((const __m128i *)(lut + 32 * g + 16));
        lut16_half_ssse3(t0, t1, _mm_loadu_si128((const __m128i *)(codes + 32 * g)), &e0, &o0);
        lut16_half_ssse3(t0, t1, _mm_loadu_si128((const __m128i *)(codes + 32 * g + 16)), &e1, &o1);
    }
    lut16_store_layout(e0, o0, e1, o1, valid, out);
}

/* Four tables per pass on 128-bit registers. */
__attribute__((target("ssse3")))
static void lut16_ssse3_4(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out)
{
    __m128i e0 = _mm_setzero_si128(), o0 = e0, e1 = e0, o1 = e0;
    int npairs = m >> 1, g = 0;
    for (; g + 2 <= npairs; g += 2) {
        __m128i t0 = _mm_loadu_si128((const __m128i *)(lut + 32 * g));
        __m128i t1 = _mm_loadu_si128((const __m128i *)(lut + 32 * g + 16));
        __m128i t2 = _mm_loadu_si128((const __m128i *)(lut + 32 * g + 32));
        __m128i t3 = _mm_loadu_si128((const __m128i *)(lut + 32 * g + 48));
        lut16_half_ssse3(t0, t1, _mm_loadu_si128((const __m128i *)(codes + 32 * g)), &e0, &o0);
        lut16_half_ssse3(t0, t1, _mm_loadu_si128((const __m128i *)(codes + 32 * g + 16)), &e1, &o1);
        lut16_half_ssse3(t2, t3, _mm_loadu_si128((const __m128i *)(codes + 32 * g + 32)), &e0, &o0);
        lut16_half_ssse3(t2, t3, _mm_loadu_si128((const __m128i *)(codes + 32 * g + 48)), &e1, &o1);
    }
    for (; g < npairs; ++g) {
        __m128i t0 = _mm_loadu_si128((const __m128i *)(lut + 32 * g));
        __m128i t1 = _mm_loadu_si128((const __m128i *)(lut + 32 * g + 16));
        lut16_half_ssse3(t0, t1, _mm_loadu_si128((const __m128i *)(codes + 32 * g)), &e0, &o0);
        lut16_half_ssse3(t0, t1, _mm_loadu_si128((const __m128i *)(codes + 32 * g + 16)), &e1, &o1);
    }
    lut16_store_layout(e0, o0, e1, o1, valid, out);
}

/* 256-bit registers: a whole pair's 32 bytes per shuffle, two pairs (four tables) per pass. */
__attribute__((target("avx2")))
static inline void lut16_pair_avx2(const uint8_t *lut, const uint8_t *codes, __m256i *even, __m256i *odd)
{
    const __m256i nib = _mm256_set1_epi8(0x0F);
    const __m256i odd_flag = _mm256_set1_epi16((short)0x8000);
    const __m256i even_flag = _mm256_set1_epi16(0x0080);
    const __m256i ones = _mm256_set1_epi8(1);
    __m256i t0 = _mm256_broadcastsi128_si256(_mm_loadu_si128((const __m128i *)lut));
    __m256i t1 = _mm256_broadcastsi128_si256(_mm_loadu_si128((const __m128i *)(lut + 16)));
    __m256i by = _mm256_loadu_si256((const __m256i *)codes);
    __m256i il = _mm256_and_si256(by, nib);
    __m256i ih = _mm256_and_si256(_mm256_srli_epi16(by, 4), nib);
    __m256i rl = _mm256_or_si256(_mm256_shuffle_epi8(t0, _mm256_or_si256(il, odd_flag)),
                                 _mm256_shuffle_epi8(t1, _mm256_or_si256(il, even_flag)));
    __m256i rh = _mm256_or_si256(_mm256_shuffle_epi8(t0, _mm256_or_si256(ih, odd_flag)),
                                 _mm256_shuffle_epi8(t1, _mm256_or_si256(ih, even_flag)));
    *even = _mm256_add_epi16(*even, _mm256_maddubs_epi16(rl, ones));
    *odd = _mm256_add_epi16(*odd, _mm256_maddubs_epi16(rh, ones));
}

__attribute__((target("avx2")))
static void lut16_avx2_4(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out)
{
    __m256i ev = _mm256_setzero_si256(), od = ev;
    int npairs = m >> 1, g = 0;
    for (; g + 2 <= npairs; g += 2) {
        lut16_pair_avx2(lut + 32 * g, codes + 32 * g, &ev, &od);
        lut16_pair_avx2(lut + 32 * g + 32, codes + 32 * g + 32, &ev, &od);
    }
    for (; g < npairs; ++g)
        lut16_pair_avx2(lut + 32 * g, codes + 32 * g, &ev, &od);
    lut16_store_layout(_mm256_castsi256_si128(ev), _mm256_castsi256_si128(od),
                       _mm256_extracti128_si256(ev, 1), _mm256_extracti128_si256(od, 1), valid, out);
}

#else
static int lut16_has_ssse3(void) { return 0; }
static int lut16_has_avx2(void) { return 0; }
#endif

/* isa: 0 portable, 1 ssse3, 2 avx2 */
static inline void lut16_vector(const uint8_t *lut, const uint8_t *codes, int m, int valid, uint16_t *out, int lanes, int isa)
{
#ifdef LEAFANN_X86
    if (lanes == 4) {
        if (isa >= 2) { lut16_avx2_4(lut, codes, m, valid, out); return; }
        if (isa >= 1) { lut16_ssse3_4(lut, codes, m, valid, out); return; }
    } else if (isa >= 1) {
        lut16_ssse3_2(lut, codes, m, valid, out);
        return;
    }
#endif
    lut16_portable(lut, codes, m, valid, out, lanes == 4 ? 2 : 1);
}

#endif
