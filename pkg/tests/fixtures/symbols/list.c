/* Intrusive list helpers. */
#include "core.h"

#define LIST_POISON_NEXT ((struct node *)0x100)
#define LIST_HEAD_INIT(name) { &(name), &(name) }

struct list_head {
    struct list_head *next;
    struct list_head *prev;
};

typedef void (*list_visit_fn)(struct list_head *);

struct list_head free_list = { &free_list, &free_list };

void list_insert(struct list_head *entry, struct list_head *head)
{
    entry->next = head->next;
    entry->prev = head;
    head->next->prev = entry;
    head->next = entry;
}

void list_remove(struct list_head *entry)
{
    entry->prev->next = entry->next;
    entry->next->prev = entry->prev;
    entry->next = LIST_POISON_NEXT;
}

int list_empty(const struct list_head *head)
{
    return head->next == head;
}
