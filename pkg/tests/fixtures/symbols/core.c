/* Core allocation helpers for the fixture tree. */
#include "core.h"

#define MAX_NODES 128
#define NODE_MAGIC 0xC0FFEE
#define CHECK_BOUNDS(idx, limit) \
    do { \
        if ((idx) >= (limit)) \
            return -1; \
    } while (0)

struct node_cache {
    struct node *slots[MAX_NODES];
    int used;
};

static struct node_cache global_cache;
static int cache_hits = 0;

union value_box {
    long as_long;
    void *as_ptr;
};

enum node_state {
    NODE_FREE,
    NODE_LIVE,
    NODE_DEAD
};

typedef int (*visit_fn)(struct node *, void *);

struct node *node_alloc(int id)
{
    struct node *n = raw_alloc(sizeof(*n));
    if (n == NULL)
        return NULL;
    n->id = id;
    n->state = NODE_LIVE;
    return n;
}

void node_free(struct node *n)
{
    if (n == NULL)
        return;
    n->state = NODE_DEAD;
    raw_free(n);
}

int cache_insert(struct node *n)
{
    CHECK_BOUNDS(global_cache.used, MAX_NODES);
    global_cache.slots[global_cache.used++] = n;
    cache_hits++;
    return 0;
}

#ifdef CONFIG_FAST_LOOKUP
int cache_lookup(int id)
{
    return fast_probe(id);
}
#else
int cache_lookup(int id)
{
    int i;
    for (i = 0; i < global_cache.used; i++)
        if (global_cache.slots[i]->id == id)
            return i;
    return -1;
}
#endif
