/* SPDX-License-Identifier: Apache-2.0 */
/* Streams a moving gradient to a wall: cc example.c -I. -L<target> -ldw2 */
#include <stdio.h>
#include <stdlib.h>
#include "dw2.h"

#define TILE 128

int main(int argc, char **argv) {
    const char *host = argc > 1 ? argv[1] : "127.0.0.1";
    unsigned port = argc > 2 ? (unsigned)atoi(argv[2]) : 7000;
    int frames = argc > 3 ? atoi(argv[3]) : 30;
    Dw2WallInfo *info;
    Dw2Session *s;
    uint32_t w, h, f;
    if (dw2_query_info(host, (uint16_t)port, &info) != DW2_OK ||
        dw2_wall_info_size(info, &w, &h) != DW2_OK ||
        dw2_connect(info, 0, 1, 80, &s) != DW2_OK) {
        fprintf(stderr, "dw2: %s\n", dw2_last_error());
        return 1;
    }
    dw2_free_wall_info(info);
    uint8_t *px = malloc((size_t)TILE * TILE * 4);
    for (int n = 0; n < frames; n++) {
        if (dw2_begin_frame(s, &f) != DW2_OK) break;
        for (uint32_t y = 0; y < h; y += TILE)
            for (uint32_t x = 0; x < w; x += TILE) {
                uint32_t tw = w - x < TILE ? w - x : TILE, th = h - y < TILE ? h - y : TILE;
                for (uint32_t i = 0; i < tw * th; i++) {
                    uint32_t gx = x + i % tw, gy = y + i / tw;
                    px[4 * i] = (uint8_t)(gx + 4 * f);
                    px[4 * i + 1] = (uint8_t)gy;
                    px[4 * i + 2] = (uint8_t)(gx ^ gy);
                    px[4 * i + 3] = 255;
                }
                if (dw2_send_rgba(s, f, px, tw, th, x, y) != DW2_OK) {
                    fprintf(stderr, "dw2: %s\n", dw2_last_error());
                    return 1;
                }
            }
    }
    free(px);
    if (dw2_disconnect(s) != DW2_OK) {
        fprintf(stderr, "dw2: %s\n", dw2_last_error());
        return 1;
    }
    printf("sent %d frames to a %ux%u wall\n", frames, w, h);
    return 0;
}
