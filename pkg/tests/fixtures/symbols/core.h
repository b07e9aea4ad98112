#ifndef CORE_H
#define CORE_H

#define RAW_POISON ((void *)0xdead)

struct node {
    int id;
    int state;
    struct node *next;
};

typedef unsigned int node_id_t;

extern int cache_hits;

struct node *node_alloc(int id);
void node_free(struct node *n);
int cache_insert(struct node *n);
int cache_lookup(int id);
void *raw_alloc(unsigned long size);
void raw_free(void *p);

#endif
