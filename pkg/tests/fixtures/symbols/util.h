#ifndef UTIL_H
#define UTIL_H

#define MIN(a, b) ((a) < (b) ? (a) : (b))
#define MAX(a, b) ((a) > (b) ? (a) : (b))
#define ARRAY_SIZE(x) (sizeof(x) / sizeof((x)[0]))
#define SWAP(t, a, b) \
    do { \
        t tmp = (a); \
        (a) = (b); \
        (b) = tmp; \
    } while (0)

union raw_bytes {
    unsigned char bytes[8];
    unsigned long word;
};

typedef long ssize_like_t;
typedef int (*compare_fn)(const void *, const void *);

enum log_level {
    LOG_DEBUG,
    LOG_INFO,
    LOG_ERROR
};

static inline int clamp_int(int v, int lo, int hi)
{
    if (v < lo)
        return lo;
    if (v > hi)
        return hi;
    return v;
}

#endif
