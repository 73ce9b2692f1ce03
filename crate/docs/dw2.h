/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the dw2 client library.
 *
 * Link against the cdylib built from crates/dw2 (libdw2.so / libdw2.dylib /
 * dw2.dll). All functions are thread-compatible: one session must not be
 * used from two threads at once, different sessions may.
 *
 *   Dw2WallInfo *info; Dw2Session *s; uint32_t f;
 *   dw2_query_info("head", 7000, &info);
 *   dw2_connect(info, rank, count, 75, &s);
 *   for (;;) {
 *       dw2_begin_frame(s, &f);
 *       dw2_send_rgba(s, f, pixels, 256, 256, x, y);   // once per tile
 *   }
 *   dw2_disconnect(s);
 *   dw2_free_wall_info(info);
 */
#ifndef DW2_H
#define DW2_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DW2_OK            0
#define DW2_EINVAL       -1  /* bad argument */
#define DW2_EUNREACHABLE -2  /* network or protocol failure */
#define DW2_EREJECTED    -3  /* stale session token */
#define DW2_EFRAME       -4  /* frame not admitted / already complete, or tile out of bounds */
#define DW2_ECLOSED      -5  /* the session ended */
#define DW2_EINTERNAL    -6  /* codec failure */

typedef struct Dw2WallInfo Dw2WallInfo;
typedef struct Dw2Session Dw2Session;

/* Message of the last failure on the calling thread. Never NULL; valid
 * until the next dw2 call on this thread. */
const char *dw2_last_error(void);

/* Asks the coordinator for the wall description. */
int dw2_query_info(const char *host, uint16_t port, Dw2WallInfo **out);

/* Virtual framebuffer size. Either out pointer may be NULL. */
int dw2_wall_info_size(const Dw2WallInfo *info, uint32_t *width, uint32_t *height);

void dw2_free_wall_info(Dw2WallInfo *info);

/* Joins the session as peer `rank` of `count`; every peer must pass the
 * same `count`. `quality` is a JPEG quality 1..100, or 0 for raw RGBA.
 * `info` may be freed afterwards. */
int dw2_connect(const Dw2WallInfo *info, uint32_t rank, uint32_t count, int quality, Dw2Session **out);

/* Blocks until the next frame is admitted and stores its id. */
int dw2_begin_frame(Dw2Session *session, uint32_t *frame);

/* Queues a width x height RGBA8 tile (rows tightly packed) for position
 * (x, y) of the virtual framebuffer. The pixels are copied before return. */
int dw2_send_rgba(Dw2Session *session, uint32_t frame, const uint8_t *rgba,
                  uint32_t width, uint32_t height, uint32_t x, uint32_t y);

/* Flushes queued tiles, leaves the session and frees the handle, also when
 * it returns an error. */
int dw2_disconnect(Dw2Session *session);

#ifdef __cplusplus
}
#endif

#endif /* DW2_H */
