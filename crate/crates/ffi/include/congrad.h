#ifndef CONGRAD_H
#define CONGRAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum CgStatus {
  CG_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  CG_STATUS_NULL_ARGUMENT = 1,
  /*
   Invalid configuration or input data.
   */
  CG_STATUS_CONFIG = 2,
  /*
   Failure while playing the stream (numeric, I/O, ...).
   */
  CG_STATUS_RUNTIME = 3,
  /*
   A string argument was not valid UTF-8.
   */
  CG_STATUS_UTF8 = 4,
  /*
   The call is not valid in the handle's current state.
   */
  CG_STATUS_STATE = 5,
  /*
   The engine panicked; the handle must not be used again.
   */
  CG_STATUS_PANIC = 6,
} CgStatus;

/*
 Opaque game handle.
 */
typedef struct CgGame CgGame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 The message of the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *cg_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *cg_version(void);

/*
 Builds a game from configuration text. On success `*out` receives a
 handle to release with [`cg_game_free`].

 # Safety
 `config` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CgStatus cg_game_new(const char *config, struct CgGame **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `game` must come from [`cg_game_new`] and not be used afterwards.
 */
void cg_game_free(struct CgGame *game);

/*
 Plays one step. `*done` is set to 1 when the stream was already exhausted
 (no step was played), 0 otherwise.

 # Safety
 `game` must be a live handle and `done` a valid pointer.
 */
enum CgStatus cg_game_step(struct CgGame *game, int32_t *done);

/*
 Plays the remaining stream.

 # Safety
 `game` must be a live handle.
 */
enum CgStatus cg_game_run(struct CgGame *game);

/*
 Steps played so far.

 # Safety
 `game` must be a live handle and `steps` a valid pointer.
 */
enum CgStatus cg_game_steps(const struct CgGame *game, uint64_t *steps);

/*
 The per-step metrics CSV so far.

 # Safety
 `game` must be a live handle and `csv` a valid pointer.
 */
enum CgStatus cg_game_metrics_csv(const struct CgGame *game, char **csv);

/*
 Ends the game (playing any remaining steps) and returns the final
 evaluation as JSON: `{"final_test": ..., "retention": ...}`, each null
 when not configured. Further step calls return [`CgStatus::State`].

 # Safety
 `game` must be a live handle and `json` a valid pointer.
 */
enum CgStatus cg_game_finish(struct CgGame *game, char **json);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void cg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONGRAD_H */
