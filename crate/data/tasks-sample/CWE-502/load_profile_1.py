def load_profile(blob):
    '''
    Restore a user profile object from bytes received in a request.
    '''
